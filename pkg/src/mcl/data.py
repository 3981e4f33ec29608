"""Datasets, file I/O, synthetic data and the two complementary-set generators.

Complementary label sets are stored as a boolean mask of shape ``(n, k)``;
``comp_sets`` exposes them as sorted tuples of class indices.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from pathlib import Path

import numpy as np

from .errors import DataIOError, InvalidInputError, InvariantViolation, SchemaError

SIZE_DIST_NAMES = ("default", "paper-literal", "fixed:<s>")


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; same seed gives the same stream within one numpy release."""
    if seed < 0 or seed >= 2**64:
        raise InvalidInputError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.default_rng(int(seed))


def derive_seed(seed: int, stream: int) -> int:
    """Child seed for a named sub-stream (generation, split, init, shuffle...)."""
    ss = np.random.SeedSequence([int(seed), int(stream)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    label_map: tuple[int, ...] | None = None  # original label of each dense index

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        if X.ndim != 2 or X.shape[0] < 1:
            raise SchemaError("features must be a non-empty (n, d) matrix")
        if y.shape != (X.shape[0],):
            raise SchemaError(f"labels shape {y.shape} does not match {X.shape[0]} rows")
        if not np.issubdtype(y.dtype, np.integer):
            raise SchemaError("labels must be integers")
        if self.num_classes < 2:
            raise SchemaError(f"need at least 2 classes, got {self.num_classes}")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise SchemaError(f"labels must lie in 0..{self.num_classes - 1}")
        object.__setattr__(self, "features", _freeze(X))
        object.__setattr__(self, "labels", _freeze(y.astype(np.int64)))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (self.num_classes == other.num_classes
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels))

    def take(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.num_classes, self.label_map)


@dataclass(frozen=True, eq=False)
class MclDataset:
    """Feature rows paired with complementary sets (non-empty, strict subsets)."""

    features: np.ndarray
    comp_mask: np.ndarray
    num_classes: int

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        M = np.asarray(self.comp_mask, dtype=bool)
        k = self.num_classes
        if k < 2:
            raise SchemaError(f"need at least 2 classes, got {k}")
        if X.ndim != 2 or M.shape != (X.shape[0], k):
            raise SchemaError(f"comp_mask shape {M.shape} does not match features {X.shape} and k={k}")
        sizes = M.sum(axis=1)
        bad = np.flatnonzero((sizes == 0) | (sizes == k))
        if bad.size:
            i = int(bad[0])
            kind = "empty" if sizes[i] == 0 else "full"
            raise InvariantViolation(f"example {i}: complementary set is the {kind} label set")
        object.__setattr__(self, "features", _freeze(X))
        object.__setattr__(self, "comp_mask", _freeze(M))

    @classmethod
    def from_sets(cls, features, comp_sets, num_classes: int) -> "MclDataset":
        X = np.asarray(features, dtype=np.float64)
        M = np.zeros((len(comp_sets), num_classes), dtype=bool)
        for i, s in enumerate(comp_sets):
            s = list(s)
            if len(set(s)) != len(s):
                raise InvariantViolation(f"example {i}: duplicate labels in {s}")
            if any(c < 0 or c >= num_classes for c in s):
                raise InvariantViolation(f"example {i}: label outside 0..{num_classes - 1}")
            M[i, s] = True
        return cls(X, M, num_classes)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def sizes(self) -> np.ndarray:
        return self.comp_mask.sum(axis=1)

    @property
    def comp_sets(self) -> list[tuple[int, ...]]:
        return [tuple(int(c) for c in np.flatnonzero(row)) for row in self.comp_mask]

    def __eq__(self, other) -> bool:
        if not isinstance(other, MclDataset):
            return NotImplemented
        return (self.num_classes == other.num_classes
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.comp_mask, other.comp_mask))

    def take(self, idx) -> "MclDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return MclDataset(self.features[idx], self.comp_mask[idx], self.num_classes)


# ---------------------------------------------------------------------------
# set-size distributions


@dataclass(frozen=True)
class SizeDistribution:
    """``probs[s - 1]`` is the probability that a complementary set has size ``s``."""

    probs: tuple[float, ...]
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 1:
            raise InvalidInputError("size distribution needs at least one entry")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise InvalidInputError(f"size probabilities must be nonnegative and sum to 1, got {p.sum()!r}")
        object.__setattr__(self, "probs", tuple(float(v) for v in p))

    @property
    def k(self) -> int:
        return len(self.probs) + 1

    def array(self) -> np.ndarray:
        return np.asarray(self.probs)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(np.arange(1, self.k), size=n, p=self.array())


def default_size_dist(k: int) -> SizeDistribution:
    """Share of size-``s`` sets among all ``2**k - 2`` admissible sets: C(k, s) / (2^k - 2)."""
    if k < 2:
        raise InvalidInputError(f"k must be >= 2, got {k}")
    total = 2**k - 2
    exact = [Fraction(comb(k, s), total) for s in range(1, k)]
    assert sum(exact) == 1
    return SizeDistribution(tuple(float(f) for f in exact), name="default")


def paper_literal_size_dist(k: int) -> SizeDistribution:
    """C(k-1, s) / (2^k - 2) renormalized; the raw weights only sum to 1/2."""
    if k < 2:
        raise InvalidInputError(f"k must be >= 2, got {k}")
    w = [Fraction(comb(k - 1, s), 2**k - 2) for s in range(1, k)]
    z = sum(w)
    return SizeDistribution(tuple(float(f / z) for f in w), name="paper-literal")


def fixed_size_dist(k: int, s: int) -> SizeDistribution:
    if k < 2:
        raise InvalidInputError(f"k must be >= 2, got {k}")
    if not 1 <= s <= k - 1:
        raise InvalidInputError(f"fixed set size must be in 1..{k - 1}, got {s}")
    p = [0.0] * (k - 1)
    p[s - 1] = 1.0
    return SizeDistribution(tuple(p), name=f"fixed:{s}")


def parse_size_dist(text: str, k: int) -> SizeDistribution:
    if text == "default":
        return default_size_dist(k)
    if text == "paper-literal":
        return paper_literal_size_dist(k)
    if text.startswith("fixed:"):
        try:
            s = int(text.split(":", 1)[1])
        except ValueError:
            raise InvalidInputError(f"bad size distribution {text!r}") from None
        return fixed_size_dist(k, s)
    raise InvalidInputError(f"unknown size distribution {text!r}; choose from {', '.join(SIZE_DIST_NAMES)}")


# ---------------------------------------------------------------------------
# complementary-set generators


def _first_by_random_keys(keys: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    # rank columns by i.i.d. uniform keys and keep the first `size` of each row:
    # every size-s subset of the finite-key columns is equally likely
    order = np.argsort(keys, axis=1, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(keys.shape[0])[:, None]
    ranks[rows, order] = np.arange(keys.shape[1])[None, :]
    return ranks < sizes[:, None]


def sample_subsets_excluding(labels: np.ndarray, k: int, sizes: np.ndarray,
                             rng: np.random.Generator) -> np.ndarray:
    """Uniform size-``sizes[i]`` subsets of ``{0..k-1} \\ {labels[i]}`` as a mask."""
    n = len(labels)
    keys = rng.random((n, k))
    keys[np.arange(n), labels] = np.inf
    return _first_by_random_keys(keys, np.asarray(sizes))


def propose_label_sets(n: int, k: int, sizes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniform size-``sizes[i]`` subsets of all ``k`` labels (the labeling-system proposal)."""
    return _first_by_random_keys(rng.random((n, k)), np.asarray(sizes))


def _check_dist(dist: SizeDistribution, k: int):
    if dist.k != k:
        raise InvalidInputError(f"size distribution is defined for k={dist.k}, data has k={k}")


def gen_mcl_direct(data: LabeledDataset, dist: SizeDistribution, seed: int) -> MclDataset:
    """Draw a size from ``dist``, then a uniform set of that size among the wrong labels."""
    k = data.num_classes
    _check_dist(dist, k)
    rng = make_rng(seed)
    sizes = dist.sample(len(data), rng)
    mask = sample_subsets_excluding(data.labels, k, sizes, rng)
    return MclDataset(data.features, mask, k)


def sample_rejection(labels: np.ndarray, k: int, dist: SizeDistribution,
                     rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Propose (size, set) pairs until the true label is absent; returns (mask, proposals)."""
    n = len(labels)
    mask = np.zeros((n, k), dtype=bool)
    pending = np.arange(n)
    proposals = 0
    while pending.size:
        sizes = dist.sample(pending.size, rng)
        prop = propose_label_sets(pending.size, k, sizes, rng)
        proposals += pending.size
        ok = ~prop[np.arange(pending.size), labels[pending]]
        mask[pending[ok]] = prop[ok]
        pending = pending[~ok]
    return mask, proposals


def gen_mcl_rejection(data: LabeledDataset, dist: SizeDistribution, seed: int) -> MclDataset:
    """Labeling-system generator: both the size and the set are redrawn on rejection."""
    k = data.num_classes
    _check_dist(dist, k)
    mask, _ = sample_rejection(data.labels, k, dist, make_rng(seed))
    return MclDataset(data.features, mask, k)


# ---------------------------------------------------------------------------
# synthetic data and splits


def synth_gaussians(k: int, d: int, n_per_class: int, separation: float, seed: int) -> LabeledDataset:
    """Unit-covariance Gaussians; class ``c`` is centred at ``±separation * e_(c mod d)``.

    The sign flips on every pass over the axes (``c // d`` odd gives the negative
    direction), so up to ``2d`` classes get distinct means.
    """
    if k < 2 or d < 1 or n_per_class < 1 or separation < 0:
        raise InvalidInputError("need k >= 2, d >= 1, n_per_class >= 1, separation >= 0")
    rng = make_rng(seed)
    labels = np.repeat(np.arange(k), n_per_class)
    means = np.zeros((k, d))
    c = np.arange(k)
    means[c, c % d] = separation * np.where((c // d) % 2 == 0, 1.0, -1.0)
    X = means[labels] + rng.standard_normal((labels.size, d))
    return LabeledDataset(X, labels, k)


def _split_sizes(n: int, val_fraction: float) -> int:
    if not 0 < val_fraction < 1:
        raise InvalidInputError(f"val_fraction must be in (0, 1), got {val_fraction}")
    if n < 2:
        raise InvalidInputError("need at least 2 examples to split")
    n_val = max(1, int(np.floor(n * val_fraction + 0.5)))
    if n_val >= n:
        raise InvalidInputError(f"validation split of {n_val} leaves no training data (n={n})")
    return n_val


def split_indices(n: int, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    n_val = _split_sizes(n, val_fraction)
    perm = make_rng(seed).permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def split_train_val(data, val_fraction: float, seed: int):
    """Disjoint (train, val) partition with ``round(n * val_fraction)`` (at least 1) held out."""
    tr, va = split_indices(len(data), val_fraction, seed)
    return data.take(tr), data.take(va)


# ---------------------------------------------------------------------------
# labeled CSV


def save_labeled_csv(data: LabeledDataset, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{j}" for j in range(data.dim)] + ["label"])
    for row, y in zip(data.features, data.labels):
        w.writerow([repr(float(v)) for v in row] + [int(y)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _parse_label(text: str, row: int, col: int) -> int:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        v = float(text)
    except ValueError:
        v = float("nan")
    if not np.isfinite(v) or not v.is_integer():
        raise DataIOError(f"row {row}, column {col}: label {text!r} is not an integer")
    return int(v)


def load_labeled_csv(path) -> LabeledDataset:
    """Header row, float feature columns, integer label last; labels are densified."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataIOError(f"cannot read {path}: {e}") from e
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) < 2:
        raise DataIOError(f"{path}: need a header row and at least one data row")
    ncol = len(rows[0])
    if ncol < 2:
        raise DataIOError(f"{path}: need at least one feature column and a label column")
    feats, raw = [], []
    for r, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != ncol:
            raise DataIOError(f"row {r}: expected {ncol} columns, got {len(row)}")
        vals = []
        for c, cell in enumerate(row[:-1], start=1):
            try:
                v = float(cell)
            except ValueError:
                raise DataIOError(f"row {r}, column {c}: cannot parse {cell!r} as a float") from None
            if not np.isfinite(v):
                raise DataIOError(f"row {r}, column {c}: non-finite value {cell!r}")
            vals.append(v)
        feats.append(vals)
        raw.append(_parse_label(row[-1], r, ncol))
    classes = sorted(set(raw))
    if len(classes) < 2:
        raise SchemaError(f"{path}: found {len(classes)} distinct label(s); at least 2 are required")
    dense = {c: i for i, c in enumerate(classes)}
    labels = np.array([dense[c] for c in raw], dtype=np.int64)
    return LabeledDataset(np.array(feats, dtype=np.float64), labels, len(classes), tuple(classes))


# ---------------------------------------------------------------------------
# complementary JSON-lines

_JSONL_KEYS = {"features", "complementary", "k"}


def save_mcl_jsonl(data: MclDataset, path) -> None:
    lines = []
    for row, s in zip(data.features, data.comp_sets):
        rec = {"features": [float(v) for v in row], "complementary": list(s), "k": data.num_classes}
        lines.append(json.dumps(rec))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_mcl_jsonl(path) -> MclDataset:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataIOError(f"cannot read {path}: {e}") from e
    feats, sets, k, d = [], [], None, None
    for ln, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataIOError(f"line {ln}: invalid JSON ({e.msg})") from None
        if not isinstance(rec, dict) or set(rec) != _JSONL_KEYS:
            raise SchemaError(f"line {ln}: expected exactly the keys {sorted(_JSONL_KEYS)}")
        kk, x, comp = rec["k"], rec["features"], rec["complementary"]
        if not isinstance(kk, int) or isinstance(kk, bool) or kk < 2:
            raise SchemaError(f"line {ln}: k must be an integer >= 2")
        if k is None:
            k = kk
        elif kk != k:
            raise SchemaError(f"line {ln}: k={kk} differs from k={k} on earlier lines")
        if not isinstance(x, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x):
            raise SchemaError(f"line {ln}: features must be an array of numbers")
        if d is None:
            d = len(x)
        elif len(x) != d:
            raise SchemaError(f"line {ln}: {len(x)} features, expected {d}")
        if not isinstance(comp, list) or not all(isinstance(c, int) and not isinstance(c, bool) for c in comp):
            raise SchemaError(f"line {ln}: complementary must be an array of integers")
        if not comp:
            raise InvariantViolation(f"line {ln}: complementary set is empty")
        if any(b <= a for a, b in zip(comp, comp[1:])):
            raise SchemaError(f"line {ln}: complementary labels must be strictly increasing")
        if comp[0] < 0 or comp[-1] >= k:
            raise SchemaError(f"line {ln}: complementary labels must lie in 0..{k - 1}")
        if len(comp) == k:
            raise InvariantViolation(f"line {ln}: complementary set is the full label set")
        feats.append(x)
        sets.append(comp)
    if k is None:
        raise DataIOError(f"{path}: no records")
    return MclDataset.from_sets(np.array(feats, dtype=np.float64).reshape(len(feats), d), sets, k)
