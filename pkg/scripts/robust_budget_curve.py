"""Worst-case training accuracy of robust trees as the adversary budget grows.

Run: python scripts/robust_budget_curve.py [--seed 0] [--n 20]
"""

import argparse

import numpy as np

from odtmip.dataset import BinarizedDataset
from odtmip.flow_oct import OCTConfig
from odtmip.robust_oct import RobustSpec, fit_robust


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--depth", type=int, default=2)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    X = rng.integers(0, 2, (args.n, 3))
    y = (X[:, 0] ^ (rng.random(args.n) < 0.15)).astype(int)
    y[:2] = (0, 1)
    ds = BinarizedDataset(X, ["a", "b", "c"], y=y)
    costs = rng.integers(1, 4, X.shape).astype(float)

    print(f"{'epsilon':>7} {'robust correct':>15} {'rounds':>7} {'cuts':>5} {'splits':>7}")
    for eps in (0, 1, 2, 3, 5, 9):
        r = fit_robust(ds, OCTConfig(depth=args.depth), RobustSpec(costs, float(eps)))
        print(f"{eps:>7} {r.objective:>15.0f} {r.extra['rounds']:>7} {r.extra['cuts']:>5} "
              f"{r.plan.branch_count:>7}")


if __name__ == "__main__":
    main()
