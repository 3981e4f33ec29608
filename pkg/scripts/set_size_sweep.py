"""Accuracy as a function of a fixed complementary-set size on the Gaussian-mixture benchmark.

    python scripts/set_size_sweep.py --methods mae,log --sizes 1,3,5,7,9
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from mcl.experiments import SyntheticSetup, run_synthetic


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--methods", default="mae,log")
    p.add_argument("--sizes", default="1,2,3,5,7,9")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--epochs", type=int, default=100)
    a = p.parse_args(argv)

    setup = SyntheticSetup(epochs=a.epochs)
    sizes = [int(s) for s in a.sizes.split(",")]
    if any(not 1 <= s <= setup.k - 1 for s in sizes):
        p.error(f"sizes must lie in 1..{setup.k - 1}")
    print("method " + " ".join(f"s={s:<6d}" for s in sizes))
    for method in a.methods.split(","):
        means = [np.mean([run_synthetic(setup, method, f"fixed:{s}", seed).test_accuracy
                          for seed in range(a.seeds)]) for s in sizes]
        print(f"{method:6s} " + " ".join(f"{m:.4f}  " for m in means), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
