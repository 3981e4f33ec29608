"""Executable checks of the statistical identities behind the estimator.

Exhaustive enumeration over small label spaces is the primary oracle; Monte
Carlo covers larger ``k``. Every check returns one :class:`CheckResult`.
Checks flagged ``informational`` never affect the overall verdict.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from math import comb

import numpy as np
from scipy.stats import chisquare

from . import baselines as bl
from .data import (SizeDistribution, default_size_dist, fixed_size_dist, make_rng, propose_label_sets,
                   sample_rejection, sample_subsets_excluding)
from .errors import InvalidInputError
from .losses import (ALL_LOSSES, MAE, LossKind, Objective, batch_risk_and_grad, class_losses, example_values,
                     mae_complement_mass, mae_offset, mcl_unbiased_grad, mcl_unbiased_loss, per_class_loss,
                     per_class_loss_grad, per_class_loss_logits, surrogate_grad, surrogate_loss)
from .models import backward, forward, init_model
from .numkernel import softmax

MAX_ENUM_K = 5
MAX_ENUM_N = 20


@dataclass
class CheckResult:
    name: str
    status: str  # pass | fail | info
    deviation: float
    tolerance: float
    size: int
    claim: str
    informational: bool = False
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def _result(name, ok, deviation, tolerance, size, claim, **details) -> CheckResult:
    return CheckResult(name, "pass" if ok else "fail", float(deviation), float(tolerance), int(size), claim,
                       details=details)


@dataclass
class VerifyReport:
    checks: list[CheckResult]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks if not c.informational)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": [asdict(c) for c in self.checks]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=str)


# ---------------------------------------------------------------------------
# enumeration helpers


def all_comp_sets(k: int) -> np.ndarray:
    """Every non-empty strict subset of ``{0..k-1}`` as a mask, ordered by size."""
    rows = []
    for s in range(1, k):
        for combo in itertools.combinations(range(k), s):
            m = np.zeros(k, dtype=bool)
            m[list(combo)] = True
            rows.append(m)
    return np.array(rows)


def uniform_population(k: int, n: int, seed: int) -> np.ndarray:
    """Joint ``p(x_i, y)`` of ``n`` equally likely points with random hard labels, shape (n, k)."""
    labels = make_rng(seed).integers(0, k, size=n)
    P = np.zeros((n, k))
    P[np.arange(n), labels] = 1.0 / n
    return P


def _check_caps(k: int, n: int):
    if not 2 <= k <= MAX_ENUM_K:
        raise InvalidInputError(f"enumeration needs 2 <= k <= {MAX_ENUM_K}, got {k}")
    if not 1 <= n <= MAX_ENUM_N:
        raise InvalidInputError(f"enumeration needs 1 <= n <= {MAX_ENUM_N}, got {n}")


def complementary_joint(P: np.ndarray, dist: SizeDistribution) -> tuple[np.ndarray, np.ndarray]:
    """``pbar(x_i, S)`` for every point and every admissible set: (masks, matrix n x |sets|)."""
    k = P.shape[1]
    masks = all_comp_sets(k)
    sizes = masks.sum(axis=1)
    ps = dist.array()[sizes - 1]
    norm = np.array([comb(k - 1, int(j)) for j in sizes], dtype=np.float64)
    outside = P @ (~masks).T  # sum_{y not in S} p(x, y)
    return masks, outside * (ps / norm)[None, :]


def check_normalization(k: int, n: int, dist: SizeDistribution | None = None, seed: int = 0) -> CheckResult:
    """Total mass of the complementary-set distribution is one."""
    _check_caps(k, n)
    dist = dist or default_size_dist(k)
    masks, joint = complementary_joint(uniform_population(k, n, seed), dist)
    total = joint.sum()
    return _result(f"normalization[k={k},n={n},{dist.name}]", abs(total - 1) <= 1e-12, abs(total - 1), 1e-12,
                   joint.size, "the complementary-set distribution sums to one over points and sets",
                   total=total)


def check_unbiasedness_exact(k: int, n: int, dist: SizeDistribution | None, kind: LossKind,
                             seed: int = 0) -> CheckResult:
    """Exact expectation of the unbiased loss under the set distribution equals the supervised risk."""
    _check_caps(k, n)
    dist = dist or default_size_dist(k)
    P = uniform_population(k, n, seed)
    logits = make_rng(seed + 1).normal(0.0, 3.0, size=(n, k))
    labels = P.argmax(axis=1)
    supervised = float(np.mean(per_class_loss_logits(logits, labels, kind)))

    masks, joint = complementary_joint(P, dist)
    m = len(masks)
    vals = mcl_unbiased_loss(np.repeat(logits, m, axis=0), np.tile(masks, (n, 1)), kind).reshape(n, m)
    estimated = float((joint * vals).sum())
    dev = abs(estimated - supervised)
    return _result(f"unbiased_exact[k={k},n={n},{dist.name},{kind.name}]", dev <= 1e-9, dev, 1e-9, n * m,
                   "expected unbiased complementary-set loss equals the ordinary classification risk",
                   supervised=supervised, estimated=estimated)


def check_unbiasedness_mc(k: int, n: int, dist: SizeDistribution | None, objective: Objective,
                          draws: int = 100_000, seed: int = 0) -> CheckResult:
    """Monte Carlo mean of the per-example objective against the exact supervised risk.

    For the unbiased objective the mean must land within 4 standard errors. The
    surrogates upper-bound the MAE objective, so for them the entry is
    informational and is expected to sit far above the MAE risk.
    """
    if draws < 10_000:
        raise InvalidInputError("Monte Carlo check needs at least 10^4 draws")
    dist = dist or default_size_dist(k)
    rng = make_rng(seed)
    labels = rng.integers(0, k, size=n)
    logits = rng.normal(0.0, 3.0, size=(n, k))
    kind = objective.loss if objective.name == "unbiased" else MAE
    exact = float(np.mean(per_class_loss_logits(logits, labels, kind)))

    idx = rng.integers(0, n, size=draws)
    sizes = dist.sample(draws, rng)
    masks = sample_subsets_excluding(labels[idx], k, sizes, rng)
    vals = example_values(logits[idx], masks, objective)
    mean, se = float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(draws))
    dev = abs(mean - exact)
    name = f"unbiased_mc[k={k},{dist.name},{objective.label}]"
    if objective.name == "unbiased":
        return _result(name, dev <= 4 * se, dev, 4 * se, draws,
                       "sample mean of the unbiased loss matches the supervised risk", mean=mean, exact=exact,
                       standard_error=se)
    biased = dev > 4 * se
    return CheckResult(name, "info", dev, 4 * se, draws,
                       "surrogate objectives are upper bounds, not unbiased estimators", informational=True,
                       details={"mean": mean, "exact_mae_risk": exact, "standard_error": se,
                                "verdict": "biased (expected: surrogate, not estimator)" if biased
                                else "within 4 SE (unexpected for a surrogate)"})


def check_inclusion_rate(k: int, s: int, draws: int = 100_000, seed: int = 0) -> CheckResult:
    """Uniform size-s proposals contain the true label with probability s/k."""
    rng = make_rng(seed)
    labels = rng.integers(0, k, size=draws)
    prop = propose_label_sets(draws, k, np.full(draws, s), rng)
    freq = prop[np.arange(draws), labels].mean()
    p = s / k
    sigma = np.sqrt(p * (1 - p) / draws)
    dev = abs(freq - p)
    return _result(f"inclusion_rate[k={k},s={s}]", dev <= 3 * sigma, dev, 3 * sigma, draws,
                   "a uniform proposal of size s contains the true label with probability s/k", frequency=freq,
                   expected=p)


def check_acceptance_rate(k: int, s: int, draws: int = 100_000, seed: int = 0) -> CheckResult:
    """Rejection labeling with sets of size s accepts a proposal with probability 1 - s/k."""
    rng = make_rng(seed)
    labels = rng.integers(0, k, size=draws)
    _, proposals = sample_rejection(labels, k, fixed_size_dist(k, s), rng)
    rate = draws / proposals
    p = 1 - s / k
    # geometric number of proposals per example: se of the ratio estimator
    sigma = np.sqrt(p * p * (1 - p) / draws)
    dev = abs(rate - p)
    return _result(f"acceptance_rate[k={k},s={s}]", dev <= 3 * sigma, dev, 3 * sigma, draws,
                   "rejection labeling accepts a size-s proposal with probability 1 - s/k", rate=rate, expected=p)


def check_rejection_conditional(k: int = 4, draws: int = 60_000, seed: int = 0,
                                alpha: float = 1e-3) -> list[CheckResult]:
    """Given the accepted size, rejection sets are uniform over the sets avoiding the true label.

    Also reports (informationally) the accepted size marginal, which is
    reweighted by ``1 - s/k`` relative to ``p(s)``.
    """
    dist = default_size_dist(k)
    rng = make_rng(seed)
    y = 0
    labels = np.full(draws, y)
    rej, _ = sample_rejection(labels, k, dist, rng)
    direct = sample_subsets_excluding(labels, k, dist.sample(draws, rng), rng)
    out = []
    for name, masks in (("rejection", rej), ("direct", direct)):
        assert not masks[:, y].any()
        pvals = {}
        worst = 0.0
        for s in range(1, k):
            rows = masks[masks.sum(axis=1) == s]
            cells = [c for c in itertools.combinations(range(k), s) if y not in c]
            keys = {c: i for i, c in enumerate(cells)}
            counts = np.zeros(len(cells))
            for row in rows:
                counts[keys[tuple(np.flatnonzero(row))]] += 1
            if len(cells) > 1:
                pvals[s] = float(chisquare(counts).pvalue)
            worst = max(worst, float(np.max(np.abs(counts / counts.sum() - 1 / len(cells)))))
        min_p = min(pvals.values()) if pvals else 1.0
        out.append(_result(f"conditional_uniformity[{name},k={k}]", min_p >= alpha, worst, alpha, draws,
                           "given its size, an accepted set is uniform over the sets that avoid the true label",
                           chi_square_pvalues=pvals, min_pvalue=min_p))

    sizes = rej.sum(axis=1)
    emp = np.array([(sizes == s).mean() for s in range(1, k)])
    p = dist.array()
    reweighted = p * (1 - np.arange(1, k) / k)
    reweighted /= reweighted.sum()
    out.append(CheckResult(f"accepted_size_marginal[k={k}]", "info", float(np.max(np.abs(emp - p))), 0.0, draws,
                           "accepted size frequencies versus p(s); rejection reweights them by (1 - s/k)",
                           informational=True,
                           details={"empirical": emp.tolist(), "p_s": p.tolist(),
                                    "p_s_times_acceptance": reweighted.tolist(),
                                    "max_dev_from_reweighted": float(np.max(np.abs(emp - reweighted)))}))
    return out


def check_purity(k_max: int = 12) -> CheckResult:
    """Counted purity matches the closed forms for every (k, s); whole sets beat decomposition for s >= 2."""
    worst, cases, bad = Fraction(0), 0, []
    for k in range(2, k_max + 1):
        for s in range(1, k):
            st = bl.purity_stats(k, s)
            want = {"decomposed": (s, (k - 2) * s, Fraction(1, k - 1)), "whole": (1, k - s - 1, Fraction(1, k - s))}
            for setting, (tp, fp, pur) in want.items():
                got = st[setting]
                cases += 1
                worst = max(worst, abs(got.purity - pur))
                if (got.tp, got.fp, got.purity) != (tp, fp, pur):
                    bad.append((k, s, setting))
            if s >= 2 and not st["whole"].purity > st["decomposed"].purity:
                bad.append((k, s, "dilution"))
    ex = bl.purity_stats(10, 3)
    return _result(f"purity[k<={k_max}]", not bad, float(worst), 0.0, cases,
                   "decomposition dilutes supervision: purity 1/(k-1) versus 1/(k-s) for the whole set",
                   mismatches=bad, k10_s3={"decomposed": str(ex["decomposed"].purity),
                                           "whole": str(ex["whole"].purity)})


def _random_instances(rng, count, k_choices=(3, 4, 5, 10)):
    for _ in range(count):
        k = int(rng.choice(k_choices))
        j = int(rng.integers(1, k))
        mask = np.zeros(k, dtype=bool)
        mask[rng.choice(k, j, replace=False)] = True
        yield k, j, mask, rng.normal(0.0, rng.uniform(0.5, 4.0), size=k)


def check_mae_identity(count: int = 10_000, seed: int = 0) -> list[CheckResult]:
    """Algebra of the MAE objective.

    ``(k-1)/j * sum_{y not in S} L_MAE = (2k-2)/j * sum_{y in S} p_y + (2k-2)(k-j-1)/j``,
    and the unbiased MAE loss itself equals ``(2k-2)/j * sum_{y in S} p_y``.
    """
    rng = make_rng(seed)
    dev_scaled, dev_unbiased = 0.0, 0.0
    for k, j, mask, z in _random_instances(rng, count):
        p = softmax(z)
        inside = mae_complement_mass(p, mask)
        L = class_losses(z, MAE)
        lhs = (k - 1) / j * L[~mask].sum()
        dev_scaled = max(dev_scaled, abs(lhs - ((2 * k - 2) / j * inside + mae_offset(k, j))))
        dev_unbiased = max(dev_unbiased, abs(mcl_unbiased_loss(z, mask, MAE) - (2 * k - 2) / j * inside))
    return [
        _result("mae_scaled_identity", dev_scaled <= 1e-12, dev_scaled, 1e-12, count,
                "(k-1)/j times the MAE loss outside the set equals (2k-2)/j times the inside mass plus a constant"),
        _result("mae_unbiased_reduction", dev_unbiased <= 1e-12, dev_unbiased, 1e-12, count,
                "the unbiased MAE loss equals (2k-2)/j times the probability mass inside the set"),
    ]


def check_free_reduction(count: int = 1000, seed: int = 0) -> CheckResult:
    """Singleton sets reduce the unbiased loss to the single-label FREE loss."""
    rng = make_rng(seed)
    worst = 0.0
    total = 0
    for kind in ALL_LOSSES:
        for _ in range(count):
            k = int(rng.integers(2, 11))
            z = rng.normal(0.0, rng.uniform(0.5, 4.0), size=k)
            cl = int(rng.integers(0, k))
            worst = max(worst, abs(bl.free_loss(z, cl, kind) - mcl_unbiased_loss(z, [cl], kind)))
            total += 1
    return _result("free_reduction", worst <= 1e-12, worst, 1e-12, total,
                   "with one complementary label the unbiased loss equals the FREE loss")


def random_prob_vectors(rng, count: int, k: int) -> np.ndarray:
    """Half uniform on the simplex, half softmax of Gaussian logits at moderate scales.

    Scales stay small enough that no probability drops below float64 resolution
    next to 1, where ``2 - 2p`` would round up to the bound itself.
    """
    half = count // 2
    flat = rng.dirichlet(np.ones(k), size=half)
    scales = rng.choice([0.1, 1.0, 3.0], size=(count - half, 1))
    return np.concatenate([flat, softmax(rng.normal(size=(count - half, k)) * scales)])


def check_bounds(count: int = 1_000_000, seed: int = 0, chunk: int = 100_000) -> list[CheckResult]:
    """Bounded losses never reach their upper bounds on random probability vectors."""
    rng = make_rng(seed)
    worst = {kind.name: -np.inf for kind in ALL_LOSSES if kind.bounded}
    done = 0
    while done < count:
        m = min(chunk, count - done)
        k = int(rng.integers(2, 11))
        p = random_prob_vectors(rng, m, k)
        y = rng.integers(0, k, size=m)
        for kind in ALL_LOSSES:
            if kind.bounded:
                worst[kind.name] = max(worst[kind.name], float(np.max(per_class_loss(p, y, kind))))
        done += m
    out = []
    for kind in ALL_LOSSES:
        if not kind.bounded:
            continue
        bound = kind.upper_bound()
        out.append(_result(f"bound[{kind.name}]", worst[kind.name] < bound, worst[kind.name] - bound, 0.0, count,
                           f"{kind.name} stays strictly below {bound:.6g}", max_value=worst[kind.name]))
    return out


# ---------------------------------------------------------------------------
# gradient checks


def fd_rel_error(analytic, numeric, atol: float) -> float:
    a, n = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), atol)))


def central_diff(f, z: np.ndarray, h: float) -> np.ndarray:
    """Central differences of a batch-capable scalar function along each coordinate."""
    k = z.size
    E = np.eye(k) * h
    vals = np.atleast_1d(f(np.concatenate([z + E, z - E])))
    return (vals[:k] - vals[k:]) / (2 * h)


def logit_gradient_cases(mask: np.ndarray, cl: int):
    """(name, batch value fn, single-row gradient fn) for every logit-space objective."""
    rows = lambda z, a: np.broadcast_to(a, (len(z),) + np.shape(a))  # noqa: E731
    cases = []
    for kind in ALL_LOSSES:
        cases.append((f"class[{kind.name}]",
                      lambda z, kind=kind: per_class_loss_logits(z, rows(z, cl), kind),
                      lambda z, kind=kind: per_class_loss_grad(z, cl, kind)))
        cases.append((f"unbiased[{kind.name}]",
                      lambda z, kind=kind: mcl_unbiased_loss(z, rows(z, mask), kind),
                      lambda z, kind=kind: mcl_unbiased_grad(z, mask, kind)))
    for which in ("exp", "log"):
        cases.append((which, lambda z, w=which: surrogate_loss(z, rows(z, mask), w),
                      lambda z, w=which: surrogate_grad(z, mask, w)[0]))
    cases.append(("pc", lambda z: bl.pc_loss(z, rows(z, cl)), lambda z: bl.pc_grad(z, cl)))
    cases.append(("free", lambda z: bl.free_loss(z, rows(z, cl)), lambda z: bl.free_grad(z, cl)))
    cases.append(("forward", lambda z: bl.forward_loss(z, rows(z, cl)), lambda z: bl.forward_grad(z, cl)))
    return cases


def check_logit_gradients(instances: int = 100, ks=(3, 10), seed: int = 0, h: float = 1e-6,
                          rtol: float = 1e-5, atol: float = 1e-7) -> CheckResult:
    rng = make_rng(seed)
    worst, per_case, n = 0.0, {}, 0
    for k in ks:
        for _ in range(instances):
            z = rng.normal(0.0, rng.uniform(0.5, 4.0), size=k)
            j = int(rng.integers(1, k))
            mask = np.zeros(k, dtype=bool)
            mask[rng.choice(k, j, replace=False)] = True
            cl = int(rng.integers(0, k))
            for name, f, g in logit_gradient_cases(mask, cl):
                err = fd_rel_error(g(z), central_diff(f, z, h), atol / rtol)
                per_case[name] = max(per_case.get(name, 0.0), err)
                worst = max(worst, err)
                n += 1
    return _result("gradients[logits]", worst <= rtol, worst, rtol, n,
                   "analytic logit gradients match central finite differences", per_objective=per_case)


def parameter_objectives(k: int):
    """Every training objective as a batch (value, dlogits) function over (logits, mask, cl)."""
    objs = {kind.name: Objective("unbiased", kind) for kind in ALL_LOSSES}
    objs["exp"], objs["log"] = Objective("exp"), Objective("log")
    cases = {f"unbiased[{n}]" if n not in ("exp", "log") else n:
             (lambda z, m, c, o=o: batch_risk_and_grad(z, m, o)) for n, o in objs.items()}
    for name in bl.SINGLE_CL_NAMES:
        meth = bl.SingleClMethod(name)
        cases[name] = lambda z, m, c, meth=meth: bl.single_cl_risk_and_grad(z, c, meth)
    return cases


def check_parameter_gradients(instances: int = 100, ks=(3, 10), ds=(2, 20), seed: int = 0, h: float = 1e-5,
                              rtol: float = 1e-4, atol: float = 1e-7, coords: int = 4,
                              batch: int = 4, hidden: int = 6) -> CheckResult:
    """Model-parameter gradients through forward/backward against central differences.

    Each instance checks one random direction plus ``coords`` random coordinates.
    """
    rng = make_rng(seed)
    worst, per_case, n = 0.0, {}, 0
    for kind in ("linear", "mlp"):
        for k in ks:
            for d in ds:
                for name, obj in parameter_objectives(k).items():
                    for _ in range(instances):
                        model = init_model(kind, d, k, hidden, int(rng.integers(2**32)))
                        for w in model.weights.values():
                            w += rng.normal(0.0, 0.5, size=w.shape)
                        X = rng.normal(size=(batch, d))
                        sizes = rng.integers(1, k, size=batch)
                        mask = propose_label_sets(batch, k, sizes, rng)
                        cl = rng.integers(0, k, size=batch)
                        logits, cache = forward(model, X)
                        _, dz = obj(logits, mask, cl)
                        grads = backward(model, cache, dz)
                        names = list(model.weights)
                        flat_g = np.concatenate([grads[nm].ravel() for nm in names])
                        flat_w = np.concatenate([model.weights[nm].ravel() for nm in names])

                        def value(theta):
                            off = 0
                            for nm in names:
                                w = model.weights[nm]
                                w[...] = theta[off:off + w.size].reshape(w.shape)
                                off += w.size
                            return obj(forward(model, X)[0], mask, cl)[0]

                        dirs = [rng.normal(size=flat_w.size)]
                        for c in rng.choice(flat_w.size, min(coords, flat_w.size), replace=False):
                            e = np.zeros(flat_w.size)
                            e[c] = 1.0
                            dirs.append(e)
                        for u in dirs:
                            num = (value(flat_w + h * u) - value(flat_w - h * u)) / (2 * h)
                            err = fd_rel_error(flat_g @ u, num, atol / rtol)
                            key = f"{kind}:{name}"
                            per_case[key] = max(per_case.get(key, 0.0), err)
                            worst = max(worst, err)
                            n += 1
                        value(flat_w)
    return _result("gradients[parameters]", worst <= rtol, worst, rtol, n,
                   "backpropagated parameter gradients match central finite differences", per_objective=per_case)


# ---------------------------------------------------------------------------
# suite


def point_masses(k: int) -> list[SizeDistribution]:
    return [fixed_size_dist(k, s) for s in range(1, k)]


def run_verify(k_max: int = MAX_ENUM_K, n_values=(5, 20), seed: int = 0, mc_draws: int = 100_000,
               grad_instances: int = 100, bound_samples: int = 1_000_000) -> VerifyReport:
    if not 3 <= k_max <= MAX_ENUM_K:
        raise InvalidInputError(f"enumeration is capped at k <= {MAX_ENUM_K} (requested {k_max})")
    for n in n_values:
        if not 1 <= n <= MAX_ENUM_N:
            raise InvalidInputError(f"enumeration is capped at n <= {MAX_ENUM_N} (requested {n})")
    checks: list[CheckResult] = []
    for k in range(2, k_max + 1):
        for n in n_values:
            for dist in [default_size_dist(k)] + point_masses(k):
                checks.append(check_normalization(k, n, dist, seed))
    for k in range(3, k_max + 1):
        for n in n_values:
            for dist in [default_size_dist(k)] + point_masses(k):
                for kind in ALL_LOSSES:
                    checks.append(check_unbiasedness_exact(k, n, dist, kind, seed))
    for kind in ALL_LOSSES:
        checks.append(check_unbiasedness_mc(10, 20, None, Objective("unbiased", kind), mc_draws, seed))
    for which in ("exp", "log"):
        checks.append(check_unbiasedness_mc(10, 20, None, Objective(which), mc_draws, seed))
    for s in (1, 3, 7):
        checks.append(check_inclusion_rate(10, s, mc_draws, seed + s))
    checks.append(check_acceptance_rate(10, 3, mc_draws, seed))
    checks.extend(check_rejection_conditional(4, 60_000, seed))
    checks.append(check_purity(12))
    checks.extend(check_mae_identity(10_000, seed))
    checks.append(check_free_reduction(1000, seed))
    checks.extend(check_bounds(bound_samples, seed))
    checks.append(check_logit_gradients(grad_instances, seed=seed))
    checks.append(check_parameter_gradients(grad_instances, seed=seed))
    return VerifyReport(checks)
