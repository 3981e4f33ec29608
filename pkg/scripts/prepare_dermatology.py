"""Convert the raw UCI ``dermatology.data`` file into the labeled CSV the CLI and tests read.

Missing ages ('?') are filled with the median observed age. The class column stays last.

    python scripts/prepare_dermatology.py dermatology.data dermatology.csv
    MCL_DERMATOLOGY_CSV=dermatology.csv pytest tests/test_acceptance.py -k dermatology
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from mcl.data import LabeledDataset, save_labeled_csv


def parse_raw(text: str) -> LabeledDataset:
    rows = [line.split(",") for line in text.splitlines() if line.strip()]
    feats = np.array([[np.nan if v.strip() == "?" else float(v) for v in r[:-1]] for r in rows])
    feats[np.isnan(feats)] = np.broadcast_to(np.nanmedian(feats, axis=0), feats.shape)[np.isnan(feats)]
    raw = [int(r[-1]) for r in rows]
    classes = sorted(set(raw))
    labels = np.array([classes.index(c) for c in raw])
    return LabeledDataset(feats, labels, len(classes), tuple(classes))


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("raw", type=Path)
    p.add_argument("out", type=Path)
    a = p.parse_args(argv)
    ds = parse_raw(a.raw.read_text())
    save_labeled_csv(ds, a.out)
    print(f"wrote {len(ds)} rows, {ds.dim} features, {ds.num_classes} classes to {a.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
