"""Test accuracy of every method on the Gaussian-mixture benchmark, averaged over seeds.

    python scripts/compare_losses.py --seeds 5 --out results/compare.csv
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from mcl.baselines import SINGLE_CL_NAMES, WRAPPER_MODES
from mcl.experiments import SyntheticSetup, run_synthetic
from mcl.losses import LOSS_NAMES, SURROGATE_NAMES


def method_specs(include_wrappers: bool) -> list[tuple[str, str | None]]:
    specs = [(m, None) for m in LOSS_NAMES + SURROGATE_NAMES]
    if include_wrappers:
        specs += [(m, w) for m in SINGLE_CL_NAMES for w in WRAPPER_MODES]
    return specs


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--size-dist", default="default")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--d", type=int, default=20)
    p.add_argument("--no-wrappers", action="store_true", help="skip the single-label baselines")
    p.add_argument("--out", type=Path)
    a = p.parse_args(argv)

    setup = SyntheticSetup(k=a.k, d=a.d, epochs=a.epochs)
    rows = []
    for method, wrapper in method_specs(not a.no_wrappers):
        runs = [run_synthetic(setup, method, a.size_dist, s, wrapper) for s in range(a.seeds)]
        acc = np.array([r.test_accuracy for r in runs])
        label = runs[0].method
        rows.append([label, acc.mean(), acc.std(), min(r.min_train_risk for r in runs)])
        print(f"{label:14s} {acc.mean():.4f} +- {acc.std():.4f}  min train risk {rows[-1][3]:+.3f}", flush=True)
    if a.out:
        a.out.parent.mkdir(parents=True, exist_ok=True)
        with a.out.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "mean_accuracy", "std_accuracy", "min_train_risk"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
