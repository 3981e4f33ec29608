"""Adam, the training loop, validation-based model selection and evaluation."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .baselines import (SINGLE_CL_NAMES, UNSUPPORTED_NAMES, WRAPPER_MODES, SingleClMethod,
                        epoch_batches, single_cl_risk_and_grad)
from .data import LabeledDataset, MclDataset, derive_seed, make_rng, split_indices
from .errors import InvalidInputError, NumericalAbort
from .losses import LOSS_NAMES, SURROGATE_NAMES, LossKind, Objective, batch_risk_and_grad
from .models import DEFAULT_HIDDEN, ModelParams, backward, forward, init_model, predict_logits
from .numkernel import argmax_first

log = logging.getLogger(__name__)

METHOD_NAMES = LOSS_NAMES + SURROGATE_NAMES + SINGLE_CL_NAMES

# sub-stream ids under one trial seed
STREAM_GENERATE, STREAM_SPLIT, STREAM_INIT, STREAM_SHUFFLE = 0, 1, 2, 3

VAL_METRIC = "fraction of validation examples whose predicted label is outside their complementary set"


class UnsupportedMethod(InvalidInputError):
    pass


@dataclass(frozen=True)
class MethodSpec:
    """Either a complementary-set objective, or a single-CL method behind a wrapper."""

    objective: Objective | None = None
    single: SingleClMethod | None = None
    wrapper: str | None = None

    def __post_init__(self):
        if (self.objective is None) == (self.single is None):
            raise InvalidInputError("a method is either an objective or a wrapped single-CL method")
        if self.single is not None and self.wrapper not in WRAPPER_MODES:
            raise InvalidInputError(f"single-CL methods need a wrapper: {' | '.join(WRAPPER_MODES)}")

    @property
    def name(self) -> str:
        if self.objective is not None:
            return self.objective.label
        return f"{self.single.name}-{self.wrapper}"


def method_from_name(name: str, wrapper: str | None = None, gce_q: float = 0.7,
                     phuber_tau: float = 10.0, surrogate_scale: bool = True) -> MethodSpec:
    name = name.lower()
    if name in LOSS_NAMES:
        return MethodSpec(Objective("unbiased", LossKind(name, q=gce_q, tau=phuber_tau)))
    if name in SURROGATE_NAMES:
        return MethodSpec(Objective(name, surrogate_scale=surrogate_scale))
    if name in SINGLE_CL_NAMES:
        if wrapper is None:
            raise InvalidInputError(f"method {name!r} needs --wrapper {'|'.join(WRAPPER_MODES)}")
        return MethodSpec(single=SingleClMethod(name, LossKind("cce")), wrapper=wrapper)
    hint = " (not supported by design)" if name in UNSUPPORTED_NAMES else ""
    raise UnsupportedMethod(f"unsupported method {name!r}{hint}; supported: {', '.join(METHOD_NAMES)}")


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    lr: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0

    @classmethod
    def for_model(cls, model: ModelParams, lr: float = 1e-3, weight_decay: float = 0.0, **kw) -> "AdamState":
        if lr < 0 or weight_decay < 0:
            raise InvalidInputError("lr and weight_decay must be nonnegative")
        zeros = lambda: {n: np.zeros_like(w) for n, w in model.weights.items()}  # noqa: E731
        return cls(zeros(), zeros(), lr, weight_decay, **kw)


def adam_step(model: ModelParams, grads: dict[str, np.ndarray], state: AdamState) -> None:
    """One in-place Adam update; weight decay shrinks parameters outside the adaptive scaling."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalAbort(f"non-finite gradient for {name} at step {state.t + 1}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, theta in model.weights.items():
        g = grads[name]
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        with np.errstate(over="ignore"):
            v += (1.0 - state.beta2) * g * g
        if not np.all(np.isfinite(v)):
            raise NumericalAbort(f"Adam second moment overflowed for {name} at step {state.t}")
        theta -= state.lr * ((m / bc1) / (np.sqrt(v / bc2) + state.eps) + state.weight_decay * theta)


# ---------------------------------------------------------------------------
# evaluation


def evaluate(model: ModelParams, test: LabeledDataset) -> float:
    pred = argmax_first(predict_logits(model, test.features))
    return float(np.mean(pred == test.labels))


def mcl_validation_accuracy(model: ModelParams, val: MclDataset) -> float:
    """Share of examples whose prediction avoids their complementary set."""
    if len(val) == 0:
        raise InvalidInputError("empty validation set")
    pred = argmax_first(predict_logits(model, val.features))
    return float(np.mean(~val.comp_mask[np.arange(len(val)), pred]))


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    method: MethodSpec
    model: str = "linear"
    hidden: int = DEFAULT_HIDDEN
    batch_size: int = 256
    epochs: int = 250
    lr: float = 1e-3
    weight_decay: float = 0.0
    seed: int = 0
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidInputError("epochs must be >= 1")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")
        if self.lr < 0 or self.weight_decay < 0:
            raise InvalidInputError("lr and weight_decay must be nonnegative")

    def describe(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "method"}
        out["method"] = self.method.name
        return out


@dataclass
class EpochRecord:
    epoch: int
    train_risk: float
    val_acc: float
    records: int
    train_acc_ordinary: float | None = None


@dataclass
class TrainReport:
    config: dict
    epochs: list[EpochRecord]
    selected_epoch: int
    model: ModelParams = field(repr=False)
    test_accuracy: float | None = None
    val_metric: str = VAL_METRIC

    @property
    def best_val_acc(self) -> float:
        return self.epochs[self.selected_epoch - 1].val_acc

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "val_metric": self.val_metric,
            "selected_epoch": self.selected_epoch,
            "best_val_acc": self.best_val_acc,
            "test_accuracy": self.test_accuracy,
            "epochs": [asdict(e) for e in self.epochs],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def curves_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        with_acc = any(e.train_acc_ordinary is not None for e in self.epochs)
        w.writerow(["epoch", "train_risk", "val_acc"] + (["train_acc_ordinary"] if with_acc else []))
        for e in self.epochs:
            row = [e.epoch, repr(e.train_risk), repr(e.val_acc)]
            if with_acc:
                row.append(repr(e.train_acc_ordinary))
            w.writerow(row)
        return buf.getvalue()


def _mcl_batches(n: int, batch_size: int, seed: int, epoch: int):
    perm = make_rng(derive_seed(seed, epoch)).permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def _step(model, state, X, objective_fn, epoch, b):
    with np.errstate(over="ignore", invalid="ignore"):
        logits, cache = forward(model, X)
    if not np.all(np.isfinite(logits)):
        raise NumericalAbort(f"non-finite logits at epoch {epoch}, batch {b}", epoch, b, float("nan"))
    with np.errstate(over="ignore", invalid="ignore"):
        value, dlogits = objective_fn(logits)
    if not np.isfinite(value) or not np.all(np.isfinite(dlogits)):
        raise NumericalAbort(f"non-finite objective at epoch {epoch}, batch {b} (value={value})",
                             epoch, b, float(value))
    try:
        adam_step(model, backward(model, cache, dlogits), state)
    except NumericalAbort as e:
        raise NumericalAbort(f"{e} (epoch {epoch}, batch {b}, objective {value})", epoch, b, float(value)) from e
    return value


def train(data: MclDataset, cfg: TrainConfig, shadow: LabeledDataset | None = None,
          test: LabeledDataset | None = None) -> TrainReport:
    """Fit on ``data`` minus a held-out validation split; keep the best-validation epoch.

    ``shadow`` carries the ordinary labels of the rows of ``data`` and is only
    used for reporting training accuracy.
    """
    if shadow is not None and len(shadow) != len(data):
        raise InvalidInputError("shadow labels must align with the training rows")
    tr_idx, va_idx = split_indices(len(data), cfg.val_fraction, derive_seed(cfg.seed, STREAM_SPLIT))
    tr, va = data.take(tr_idx), data.take(va_idx)
    shadow_tr = shadow.take(tr_idx) if shadow is not None else None

    model = init_model(cfg.model, data.dim, data.num_classes, cfg.hidden, derive_seed(cfg.seed, STREAM_INIT))
    state = AdamState.for_model(model, cfg.lr, cfg.weight_decay)
    shuffle_seed = derive_seed(cfg.seed, STREAM_SHUFFLE)
    method = cfg.method

    history: list[EpochRecord] = []
    best_acc, best_epoch, best_model = -1.0, 0, model.copy()
    for epoch in range(1, cfg.epochs + 1):
        total, count = 0.0, 0
        if method.objective is not None:
            for b, idx in enumerate(_mcl_batches(len(tr), cfg.batch_size, shuffle_seed, epoch)):
                mask = tr.comp_mask[idx]
                value = _step(model, state, tr.features[idx],
                              lambda z: batch_risk_and_grad(z, mask, method.objective), epoch, b)
                total += value * len(idx)
                count += len(idx)
        else:
            for b, rec in enumerate(epoch_batches(tr, method.wrapper, cfg.batch_size, shuffle_seed, epoch)):
                labels = rec.labels
                value = _step(model, state, tr.features[rec.rows],
                              lambda z: single_cl_risk_and_grad(z, labels, method.single), epoch, b)
                total += value * len(rec)
                count += len(rec)
            log.info("epoch %d: %d decomposed records (%s wrapper)", epoch, count, method.wrapper)
        acc = mcl_validation_accuracy(model, va)
        ordinary = evaluate(model, shadow_tr) if shadow_tr is not None else None
        history.append(EpochRecord(epoch, total / count, acc, count, ordinary))
        log.debug("epoch %d: risk %.6g, val %.4f", epoch, total / count, acc)
        if acc > best_acc:
            best_acc, best_epoch, best_model = acc, epoch, model.copy()

    report = TrainReport(cfg.describe(), history, best_epoch, best_model)
    if test is not None:
        report.test_accuracy = evaluate(best_model, test)
    return report


@dataclass
class GridResult:
    config: TrainConfig
    report: TrainReport
    cells: list[dict]


def grid_search(data: MclDataset, lrs, weight_decays, template: TrainConfig,
                shadow: LabeledDataset | None = None, test: LabeledDataset | None = None) -> GridResult:
    """Train every (lr, weight_decay) cell; pick by validation accuracy, ties to smaller lr then wd."""
    lrs, weight_decays = list(lrs), list(weight_decays)
    if not lrs or not weight_decays:
        raise InvalidInputError("grids must be non-empty")
    runs = []
    for lr in lrs:
        for wd in weight_decays:
            cfg = replace(template, lr=lr, weight_decay=wd)
            runs.append((cfg, train(data, cfg, shadow, test)))
    cells = [{"lr": c.lr, "weight_decay": c.weight_decay, "val_acc": r.best_val_acc,
              "test_accuracy": r.test_accuracy} for c, r in runs]
    best = min(range(len(runs)), key=lambda i: (-runs[i][1].best_val_acc, runs[i][0].lr, runs[i][0].weight_decay))
    return GridResult(runs[best][0], runs[best][1], cells)
