"""Compare the MIO classifier with exhaustive enumeration on random datasets.

Run: python scripts/oracle_sweep.py [--instances 10] [--depth 2] [--seed 0]

Exits nonzero if any instance disagrees with the oracle.
"""

import argparse
import sys
import time
from dataclasses import dataclass

import numpy as np

from odtmip.dataset import BinarizedDataset
from odtmip.flow_oct import OCTConfig, evaluate_objective, fit_classifier
from odtmip.oracle import best_plan


@dataclass
class SweepConfig:
    instances: int = 10
    depth: int = 2
    max_n: int = 30
    max_features: int = 5
    max_labels: int = 3
    lam: float = 0.0
    seed: int = 0


def random_instance(rng, cfg):
    n = int(rng.integers(8, cfg.max_n + 1))
    F = int(rng.integers(1, cfg.max_features + 1))
    K = int(rng.integers(2, cfg.max_labels + 1))
    y = rng.integers(0, K, n)
    y[:K] = np.arange(K)
    return BinarizedDataset(rng.integers(0, 2, (n, F)), [f"f{j}" for j in range(F)], y=y)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for name, default in vars(SweepConfig()).items():
        ap.add_argument(f"--{name.replace('_', '-')}", type=type(default), default=default)
    cfg = SweepConfig(**vars(ap.parse_args()))

    rng = np.random.default_rng(cfg.seed)
    bad = 0
    print(f"{'#':>3} {'n':>3} {'F':>2} {'K':>2} {'mio':>9} {'oracle':>9} {'mio s':>7} {'oracle s':>8}")
    for k in range(cfg.instances):
        ds = random_instance(rng, cfg)
        oct_cfg = OCTConfig(depth=cfg.depth, lam=cfg.lam)
        t0 = time.perf_counter()
        r = fit_classifier(ds, oct_cfg)
        t1 = time.perf_counter()
        _, value = best_plan(lambda p: evaluate_objective(p, ds, oct_cfg), cfg.depth,
                             ds.n_features, ds.n_classes)
        t2 = time.perf_counter()
        flag = "" if abs(r.objective - value) <= 1e-9 else "  MISMATCH"
        bad += bool(flag)
        print(f"{k:>3} {ds.n:>3} {ds.n_features:>2} {ds.n_classes:>2} {r.objective:>9.4f} "
              f"{value:>9.4f} {t1 - t0:>7.2f} {t2 - t1:>8.2f}{flag}")
    print(f"{cfg.instances - bad}/{cfg.instances} instances agree")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
