"""Linear and one-hidden-layer ReLU classifiers with hand-written backprop."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import make_rng
from .errors import DimensionError, InvalidInputError, SchemaError

MODEL_KINDS = ("linear", "mlp")
DEFAULT_HIDDEN = 500


def _shapes(kind: str, d: int, k: int, hidden: int | None) -> dict[str, tuple[int, ...]]:
    if kind == "linear":
        return {"W": (k, d), "b": (k,)}
    return {"W1": (hidden, d), "b1": (hidden,), "W2": (k, hidden), "b2": (k,)}


@dataclass(eq=False)
class ModelParams:
    kind: str
    d: int
    k: int
    weights: dict[str, np.ndarray]
    hidden: int | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise InvalidInputError(f"unknown model kind {self.kind!r}; choose from {', '.join(MODEL_KINDS)}")
        want = _shapes(self.kind, self.d, self.k, self.hidden)
        if set(self.weights) != set(want):
            raise SchemaError(f"{self.kind} model needs weights {sorted(want)}, got {sorted(self.weights)}")
        for name, shape in want.items():
            w = np.asarray(self.weights[name], dtype=np.float64)
            if w.shape != shape:
                raise SchemaError(f"weight {name}: shape {w.shape}, expected {shape}")
            if not np.all(np.isfinite(w)):
                raise SchemaError(f"weight {name}: non-finite entries")
            self.weights[name] = w

    def copy(self) -> "ModelParams":
        return ModelParams(self.kind, self.d, self.k, {n: w.copy() for n, w in self.weights.items()}, self.hidden)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelParams):
            return NotImplemented
        return ((self.kind, self.d, self.k, self.hidden) == (other.kind, other.d, other.k, other.hidden)
                and all(np.array_equal(w, other.weights[n]) for n, w in self.weights.items()))

    def num_params(self) -> int:
        return sum(w.size for w in self.weights.values())

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "d": self.d, "k": self.k}
        if self.kind == "mlp":
            out["hidden"] = self.hidden
        # json writes floats with repr(), which round-trips float64 exactly
        out["weights"] = {n: [float(v) for v in w.ravel()] for n, w in self.weights.items()}
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelParams":
        try:
            kind, d, k = obj["kind"], int(obj["d"]), int(obj["k"])
            hidden = int(obj["hidden"]) if kind == "mlp" else None
            shapes = _shapes(kind, d, k, hidden)
            weights = {}
            for name, shape in shapes.items():
                flat = np.asarray(obj["weights"][name], dtype=np.float64)
                if flat.size != int(np.prod(shape)):
                    raise SchemaError(f"weight {name}: {flat.size} values, expected {int(np.prod(shape))}")
                weights[name] = flat.reshape(shape)
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"malformed model file: {e}") from e
        return cls(kind, d, k, weights, hidden)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ModelParams":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def init_model(kind: str, d: int, k: int, hidden: int | None = DEFAULT_HIDDEN, seed: int = 0) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    if d < 1 or k < 1:
        raise InvalidInputError("need d >= 1 and k >= 1")
    if kind == "mlp" and (hidden is None or hidden < 1):
        raise InvalidInputError("mlp needs hidden >= 1")
    if kind not in MODEL_KINDS:
        raise InvalidInputError(f"unknown model kind {kind!r}; choose from {', '.join(MODEL_KINDS)}")
    rng = make_rng(seed)
    weights = {}
    for name, shape in _shapes(kind, d, k, hidden).items():
        if len(shape) == 2:
            a = np.sqrt(6.0 / (shape[0] + shape[1]))
            weights[name] = rng.uniform(-a, a, size=shape)
        else:
            weights[name] = np.zeros(shape)
    return ModelParams(kind, d, k, weights, hidden if kind == "mlp" else None)


@dataclass
class ForwardCache:
    features: np.ndarray
    pre: np.ndarray | None = None  # hidden pre-activations
    hidden: np.ndarray | None = None
    kind: str = field(default="linear")


def forward(model: ModelParams, features) -> tuple[np.ndarray, ForwardCache]:
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if X.shape[1] != model.d:
        raise DimensionError(f"model expects {model.d} features, got {X.shape[1]}")
    w = model.weights
    if model.kind == "linear":
        return X @ w["W"].T + w["b"], ForwardCache(X, kind="linear")
    pre = X @ w["W1"].T + w["b1"]
    h = np.maximum(pre, 0.0)
    return h @ w["W2"].T + w["b2"], ForwardCache(X, pre, h, kind="mlp")


def predict_logits(model: ModelParams, features) -> np.ndarray:
    return forward(model, features)[0]


def backward(model: ModelParams, cache: ForwardCache, dlogits) -> dict[str, np.ndarray]:
    """Parameter gradients given ``d objective / d logits`` (summed over rows)."""
    G = np.atleast_2d(np.asarray(dlogits, dtype=np.float64))
    X = cache.features
    if cache.kind != model.kind or G.shape != (X.shape[0], model.k) or X.shape[1] != model.d:
        raise DimensionError("forward cache does not match this model / gradient")
    if model.kind == "linear":
        return {"W": G.T @ X, "b": G.sum(axis=0)}
    w = model.weights
    dh = G @ w["W2"]
    # relu'(0) := 0
    dpre = dh * (cache.pre > 0)
    return {"W1": dpre.T @ X, "b1": dpre.sum(axis=0), "W2": G.T @ cache.hidden, "b2": G.sum(axis=0)}


def zeros_like(model: ModelParams) -> dict[str, np.ndarray]:
    return {n: np.zeros_like(w) for n, w in model.weights.items()}
