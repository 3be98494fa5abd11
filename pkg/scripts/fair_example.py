"""Sweep the statistical-parity bound on a synthetic biased dataset.

Run: python scripts/fair_example.py [--seed 0] [--n 40]

Prints, for each bound, the training accuracy, the disparity of the learned
tree and the solve time. The bound of 1 row is the unconstrained optimum.
"""

import argparse
import time

import numpy as np

from odtmip.dataset import BinarizedDataset
from odtmip.fair_oct import FairnessSpec, disparity, fit_fair
from odtmip.flow_oct import OCTConfig


def biased_data(rng, n):
    # group membership leaks into two of the four features and the label
    g = rng.integers(0, 2, n)
    X = rng.integers(0, 2, (n, 4))
    X[:, 0] = np.where(rng.random(n) < 0.8, g, X[:, 0])
    y = ((X[:, 1] + g + (rng.random(n) < 0.2)) >= 2).astype(int)
    y[:2] = (0, 1)
    g[:2] = (0, 1)
    return BinarizedDataset(X, [f"x{j}" for j in range(4)], y=y, protected=g)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=40)
    ap.add_argument("--depth", type=int, default=2)
    args = ap.parse_args()

    ds = biased_data(np.random.default_rng(args.seed), args.n)
    cfg = OCTConfig(depth=args.depth, lam=0.01)
    print(f"{'bound':>6} {'accuracy':>9} {'disparity':>10} {'seconds':>8}")
    for bound in (1.0, 0.3, 0.1, 0.0):
        spec = FairnessSpec("SP", bound, positive_class=1)
        t0 = time.perf_counter()
        r = fit_fair(ds, cfg, spec)
        acc = float(np.mean(r.predict(ds.X) == ds.y))
        print(f"{bound:>6.2f} {acc:>9.3f} {disparity(r.plan, ds, spec):>10.3f} "
              f"{time.perf_counter() - t0:>8.2f}")


if __name__ == "__main__":
    main()
