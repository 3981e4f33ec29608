"""Desk-scale benchmark protocol shared by the experiment scripts and the acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset, derive_seed, gen_mcl_direct, make_rng, parse_size_dist, synth_gaussians
from .optim import STREAM_GENERATE, TrainConfig, TrainReport, method_from_name, train


@dataclass(frozen=True)
class SyntheticSetup:
    """Gaussian-mixture benchmark; train, test and set draws use disjoint seed offsets."""

    k: int = 10
    d: int = 20
    per_class: int = 500
    separation: float = 3.0
    epochs: int = 100
    lr: float = 1e-3
    batch_size: int = 256
    model: str = "linear"

    def datasets(self, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
        return (synth_gaussians(self.k, self.d, self.per_class, self.separation, 1000 + seed),
                synth_gaussians(self.k, self.d, self.per_class, self.separation, 2000 + seed))


@dataclass(frozen=True)
class RunResult:
    method: str
    size_dist: str
    seed: int
    test_accuracy: float
    min_train_risk: float
    selected_epoch: int


def run_synthetic(setup: SyntheticSetup, method: str, size_dist: str = "default", seed: int = 0,
                  wrapper: str | None = None) -> RunResult:
    tr, te = setup.datasets(seed)
    mcl = gen_mcl_direct(tr, parse_size_dist(size_dist, setup.k), 3000 + seed)
    cfg = TrainConfig(method_from_name(method, wrapper), setup.model, batch_size=setup.batch_size,
                      epochs=setup.epochs, lr=setup.lr, seed=seed)
    rep = train(mcl, cfg, test=te)
    label = method if wrapper is None else f"{method}:{wrapper}"
    return RunResult(label, size_dist, seed, rep.test_accuracy, min(e.train_risk for e in rep.epochs),
                     rep.selected_epoch)


def standardize(train_set: LabeledDataset, *others: LabeledDataset) -> list[LabeledDataset]:
    """Scale every set with the training set's per-feature mean and std (constant columns left as is)."""
    mu = train_set.features.mean(axis=0)
    sd = train_set.features.std(axis=0)
    sd[sd == 0] = 1.0
    return [LabeledDataset((ds.features - mu) / sd, ds.labels, ds.num_classes, ds.label_map)
            for ds in (train_set, *others)]


def holdout_trial(data: LabeledDataset, method: str, seed: int, test_fraction: float = 0.2,
                  epochs: int = 250, lr: float = 1e-2, wrapper: str | None = None) -> TrainReport:
    """Random train/test split of a labeled table, standardized, then trained from generated sets."""
    perm = make_rng(seed).permutation(len(data))
    cut = int(round((1 - test_fraction) * len(data)))
    tr, te = standardize(data.take(np.sort(perm[:cut])), data.take(np.sort(perm[cut:])))
    mcl = gen_mcl_direct(tr, parse_size_dist("default", tr.num_classes), derive_seed(seed, STREAM_GENERATE))
    cfg = TrainConfig(method_from_name(method, wrapper), epochs=epochs, lr=lr, seed=seed)
    return train(mcl, cfg, test=te)

