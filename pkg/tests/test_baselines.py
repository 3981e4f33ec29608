from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcl.baselines import (SingleClMethod, decompose, epoch_batches, forward_grad, forward_loss, free_grad,
                           free_loss, pc_grad, pc_loss, purity_stats, single_cl_risk_and_grad)
from mcl.data import MclDataset
from mcl.errors import InvalidInputError
from mcl.losses import ALL_LOSSES, CCE, MAE, per_class_loss_logits


def numgrad(f, z, h=1e-6):
    g = np.zeros_like(z)
    for i in range(len(z)):
        e = np.zeros_like(z)
        e[i] = h
        g[i] = (f(z + e) - f(z - e)) / (2 * h)
    return g


def random_mcl(rng, n, k, d=2):
    sizes = rng.integers(1, k, size=n)
    sets = [np.sort(rng.choice(k, size=s, replace=False)) for s in sizes]
    return MclDataset.from_sets(rng.normal(size=(n, d)), sets, k)


# --- PC


def test_pc_examples():
    assert pc_loss(np.zeros(10), 3) == pytest.approx(4.5, abs=1e-15)
    assert pc_loss([0.0, np.log(3), 0.0], 0) == pytest.approx(0.75, abs=1e-15)
    assert pc_loss([-60.0, 0.0, 0.0, 0.0], 0) < 1e-25


# --- FREE


def test_free_examples():
    assert free_loss(np.zeros(10), 0, CCE) == pytest.approx(np.log(10), abs=1e-12)
    assert free_loss(np.zeros(3), 2, MAE) == pytest.approx(4 / 3, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**32 - 1), st.sampled_from(ALL_LOSSES))
def test_free_matches_definition(k, seed, kind):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=k) * 2
    cl = int(rng.integers(k))
    ref = sum(per_class_loss_logits(z, y, kind) for y in range(k)) - (k - 1) * per_class_loss_logits(z, cl, kind)
    assert free_loss(z, cl, kind) == pytest.approx(ref, abs=1e-12)


# --- Forward


def test_forward_examples():
    assert forward_loss(np.zeros(10), 4) == pytest.approx(np.log(10), abs=1e-12)
    assert forward_loss([-50.0, 0.0, 0.0], 0) == pytest.approx(np.log(2), abs=1e-12)
    z = np.array([0.4, -1.3])
    assert forward_loss(z, 0) == pytest.approx(per_class_loss_logits(z, 1, CCE), abs=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 10), st.integers(0, 2**32 - 1))
def test_forward_decreasing_in_cl_logit(k, seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=k)
    values = []
    for shift in np.linspace(-5, 5, 11):
        zz = z.copy()
        zz[0] = shift
        values.append(forward_loss(zz, 0))
    assert np.all(np.diff(values) > 0)
    assert min(values) >= np.log(k - 1) - 1e-12


# --- gradients


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**32 - 1), st.sampled_from(["pc", "free", "forward"]))
def test_single_cl_grads_match_fd(k, seed, name):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=k) * rng.choice([0.3, 1.0, 3.0])
    cl = int(rng.integers(k))
    loss, grad = {"pc": (pc_loss, pc_grad), "free": (free_loss, free_grad),
                  "forward": (forward_loss, forward_grad)}[name]
    np.testing.assert_allclose(grad(z, cl), numgrad(lambda v: loss(v, cl), z), rtol=1e-5, atol=1e-7)


def test_batch_risk_is_record_mean():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(6, 4))
    cl = rng.integers(0, 4, size=6)
    m = SingleClMethod("pc")
    value, g = single_cl_risk_and_grad(z, cl, m)
    assert value == pytest.approx(np.mean([pc_loss(z[i], cl[i]) for i in range(6)]), abs=1e-14)
    np.testing.assert_allclose(g[2], pc_grad(z[2], cl[2]) / 6, atol=1e-16)


def test_unknown_method():
    with pytest.raises(InvalidInputError):
        SingleClMethod("ga")


# --- wrappers


def test_decompose_examples():
    singles = MclDataset.from_sets(np.arange(3.0)[:, None], [[1], [0], [2]], 3)
    rec = decompose(singles)
    assert rec.rows.tolist() == [0, 1, 2] and rec.labels.tolist() == [1, 0, 2]
    one = MclDataset.from_sets(np.ones((1, 2)), [[0, 2, 3]], 5)
    rec = decompose(one)
    assert len(rec) == 3 and set(rec.rows.tolist()) == {0}


def test_after_shuffle_record_count():
    sets = [[0], [0, 1], [0, 1, 2], [1], [1, 2]]
    mcl = MclDataset.from_sets(np.zeros((5, 1)), sets, 4)
    batches = list(epoch_batches(mcl, "after", 4, seed=0))
    assert sum(len(b) for b in batches) == 9
    assert len(batches) == 2


def test_before_shuffle_batches_by_records():
    sets = [[0], [0, 1], [0, 1, 2], [1], [1, 2]]
    mcl = MclDataset.from_sets(np.zeros((5, 1)), sets, 4)
    assert [len(b) for b in epoch_batches(mcl, "before", 4, seed=0)] == [4, 4, 1]


def multiset(batches):
    return Counter((int(r), int(c)) for b in batches for r, c in zip(b.rows, b.labels))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.integers(2, 8), st.integers(1, 16), st.integers(0, 5))
def test_wrappers_emit_same_multiset(seed, n, k, bs, epoch):
    mcl = random_mcl(np.random.default_rng(seed), n, k)
    before = multiset(epoch_batches(mcl, "before", bs, seed, epoch))
    after = multiset(epoch_batches(mcl, "after", bs, seed, epoch))
    assert before == after == multiset([decompose(mcl)])


def test_singletons_same_batch_sizes():
    rng = np.random.default_rng(0)
    mcl = MclDataset.from_sets(rng.normal(size=(23, 2)), [[int(c)] for c in rng.integers(0, 3, 23)], 3)
    b = [len(x) for x in epoch_batches(mcl, "before", 5, 1)]
    a = [len(x) for x in epoch_batches(mcl, "after", 5, 1)]
    assert a == b


def test_wrapper_mode_validated():
    mcl = MclDataset.from_sets(np.zeros((1, 1)), [[0]], 2)
    with pytest.raises(InvalidInputError):
        list(epoch_batches(mcl, "during", 4, 0))


# --- purity


def test_purity_table_values():
    st_ = purity_stats(10, 3)
    assert st_["decomposed"].purity == Fraction(1, 9)
    assert st_["whole"].purity == Fraction(1, 7)


@pytest.mark.parametrize("k", range(2, 13))
def test_purity_closed_forms(k):
    for s in range(1, k):
        st_ = purity_stats(k, s)
        d, w = st_["decomposed"], st_["whole"]
        assert (d.tp, d.fp) == (s, s * (k - 2))
        assert (w.tp, w.fp) == (1, k - s - 1)
        assert d.purity == Fraction(1, k - 1) and w.purity == Fraction(1, k - s)
        if s >= 2:
            assert w.purity > d.purity
        else:
            assert w.purity == d.purity
    assert purity_stats(k, k - 1)["whole"].purity == 1
