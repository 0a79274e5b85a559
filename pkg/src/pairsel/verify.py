"""Statistical and exact verification harness.

Exact checks enumerate every random-tape state with rational arithmetic and
must come out at deviation zero; Monte Carlo checks are seeded, report
confidence intervals at a configurable sigma multiple (default 3), and
aggregate through associative (count, sum, sum-of-squares) merges so that
results are independent of chunking and thread scheduling.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import pifam, schemes
from .gf import FieldMatrix, check_modulus
from .instances import CrsInstance, ProphetParams, _span_vectors, sample_prophet_instance
from .matroid import DuplicatedLinearMatroid, LabeledVector, SimplePartitionMatroid

DEFAULT_SIGMAS = 3.0
EXACT_TAPE_LIMIT = 2**24


# ---------------------------------------------------------------------------
# Estimates and accumulators


@dataclass(frozen=True)
class Accumulator:
    """Associative (count, sum, sum of squares) triple."""

    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    def add(self, x: float) -> "Accumulator":
        return Accumulator(self.count + 1, self.total + x, self.total_sq + x * x)

    def merge(self, other: "Accumulator") -> "Accumulator":
        return Accumulator(
            self.count + other.count,
            self.total + other.total,
            self.total_sq + other.total_sq,
        )

    @classmethod
    def from_samples(cls, xs: Iterable[float]) -> "Accumulator":
        acc = cls()
        for x in xs:
            acc = acc.add(x)
        return acc


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo point estimate with trial count, standard error, and a
    normal confidence interval at ``sigmas`` standard errors."""

    mean: float
    trials: int
    std_error: float
    ci_low: float
    ci_high: float
    sigmas: float = DEFAULT_SIGMAS

    @classmethod
    def from_accumulator(cls, acc: Accumulator, sigmas: float = DEFAULT_SIGMAS) -> "Estimate":
        if acc.count == 0:
            return cls(float("nan"), 0, float("nan"), float("nan"), float("nan"), sigmas)
        mean = acc.total / acc.count
        var = max(acc.total_sq / acc.count - mean * mean, 0.0)
        se = math.sqrt(var / acc.count)
        return cls(mean, acc.count, se, mean - sigmas * se, mean + sigmas * se, sigmas)

    @classmethod
    def from_samples(cls, xs: Iterable[float], sigmas: float = DEFAULT_SIGMAS) -> "Estimate":
        return cls.from_accumulator(Accumulator.from_samples(xs), sigmas)

    @classmethod
    def binomial(cls, successes: int, trials: int, sigmas: float = DEFAULT_SIGMAS) -> "Estimate":
        p = successes / trials
        se = math.sqrt(p * (1 - p) / trials)
        return cls(p, trials, se, p - sigmas * se, p + sigmas * se, sigmas)

    def scaled(self, factor: float, offset: float = 0.0) -> "Estimate":
        lo = factor * self.ci_low + offset
        hi = factor * self.ci_high + offset
        return Estimate(
            factor * self.mean + offset,
            self.trials,
            abs(factor) * self.std_error,
            min(lo, hi),
            max(lo, hi),
            self.sigmas,
        )


@dataclass(frozen=True)
class RatioAccumulator:
    """Paired moments for a ratio-of-means estimate E[x]/E[y]."""

    count: int = 0
    sum_x: float = 0.0
    sum_y: float = 0.0
    sum_xx: float = 0.0
    sum_yy: float = 0.0
    sum_xy: float = 0.0

    def add(self, x: float, y: float) -> "RatioAccumulator":
        return RatioAccumulator(
            self.count + 1,
            self.sum_x + x,
            self.sum_y + y,
            self.sum_xx + x * x,
            self.sum_yy + y * y,
            self.sum_xy + x * y,
        )

    def merge(self, other: "RatioAccumulator") -> "RatioAccumulator":
        return RatioAccumulator(
            self.count + other.count,
            self.sum_x + other.sum_x,
            self.sum_y + other.sum_y,
            self.sum_xx + other.sum_xx,
            self.sum_yy + other.sum_yy,
            self.sum_xy + other.sum_xy,
        )

    def estimate(self, sigmas: float = DEFAULT_SIGMAS) -> Estimate:
        """Delta-method interval for the ratio of means."""
        n = self.count
        if n == 0 or self.sum_y == 0:
            return Estimate(float("nan"), n, float("nan"), float("nan"), float("nan"), sigmas)
        mean_x, mean_y = self.sum_x / n, self.sum_y / n
        r = mean_x / mean_y
        var_x = max(self.sum_xx / n - mean_x**2, 0.0)
        var_y = max(self.sum_yy / n - mean_y**2, 0.0)
        cov = self.sum_xy / n - mean_x * mean_y
        var_r = max(var_x - 2 * r * cov + r * r * var_y, 0.0) / (n * mean_y * mean_y)
        se = math.sqrt(var_r)
        return Estimate(r, n, se, r - sigmas * se, r + sigmas * se, sigmas)


def run_chunks(
    chunk_fn: Callable[[np.random.Generator, int], object],
    trials: int,
    rng: np.random.Generator,
    *,
    threads: int = 1,
    chunk_size: int = 1024,
    reduce_fn: Callable = lambda a, b: a.merge(b),
):
    """Run ``trials`` split into fixed-size chunks on derived sub-streams.

    Chunk streams come from spawning the parent generator, so the merged
    result is a pure function of (generator, trials, chunk_size) and the
    thread count changes wall time only.
    """
    sizes = []
    remaining = trials
    while remaining > 0:
        sizes.append(min(chunk_size, remaining))
        remaining -= chunk_size
    streams = rng.spawn(len(sizes))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(chunk_fn, streams, sizes))
    else:
        results = [chunk_fn(s, n) for s, n in zip(streams, sizes)]
    out = results[0]
    for r in results[1:]:
        out = reduce_fn(out, r)
    return out


# ---------------------------------------------------------------------------
# Exact enumeration checks


@dataclass(frozen=True)
class ExactCheckResult:
    construction: str
    q: int
    m: int
    n: int
    d: int
    states: int
    max_marginal_deviation: Fraction
    max_joint_deviation: Fraction

    @property
    def deviation(self) -> Fraction:
        return max(self.max_marginal_deviation, self.max_joint_deviation)


def _enumerate_maps(q: int, d: int, m: int):
    """All matrices in GF(q)^{d x m} as row tuples, each with equal weight."""
    for flat in itertools.product(range(q), repeat=d * m):
        yield tuple(flat[i * m : (i + 1) * m] for i in range(d))


def _apply(rows, col, q: int) -> tuple[int, ...]:
    return tuple(sum(a * b for a, b in zip(row, col)) % q for row in rows)


def exact_pairwise_check(
    construction: str,
    q: int,
    m: int,
    n: int,
    d: int,
    *,
    sigma: FieldMatrix | None = None,
    k: int = 2,
    mixture_weight: Fraction | None = None,
    block_probability: Fraction | None = None,
) -> ExactCheckResult:
    """Exhaustively verify independence of a construction with rationals.

    ``ordered`` enumerates every random map and compares all joint column
    distributions of size up to k against products of marginals (and each
    marginal against 1/q^d).  ``unordered`` additionally folds in the
    two-branch mixture analytically, covering every labeled pair including
    same-label ones.  Any nonzero deviation is a construction bug, except
    under the deliberate corruption knobs used by mutation tests.
    """
    check_modulus(q)
    states = q ** (d * m)
    if states > EXACT_TAPE_LIMIT:
        raise ValueError(f"random tape has {states} states, above the exact limit {EXACT_TAPE_LIMIT}")
    if sigma is None:
        sigma = pifam.sigma_crs(q, m, n)
    if sigma.rows != m or sigma.cols != n:
        raise ValueError(f"sigma must be {m}x{n}, got {sigma.rows}x{sigma.cols}")
    cols = [sigma.column(j) for j in range(n)]

    if construction == "ordered":
        return _exact_ordered(q, m, n, d, cols, states, k)
    if construction == "unordered":
        return _exact_unordered(q, m, n, d, cols, states, mixture_weight, block_probability)
    raise ValueError(f"unknown construction {construction!r}")


def _exact_ordered(q, m, n, d, cols, states, k) -> ExactCheckResult:
    marginals: dict = {}
    joints: dict = {}
    subsets = [s for size in range(2, k + 1) for s in itertools.combinations(range(n), size)]
    for rows in _enumerate_maps(q, d, m):
        images = [_apply(rows, col, q) for col in cols]
        for j, img in enumerate(images):
            marginals[(j, img)] = marginals.get((j, img), 0) + 1
        for s in subsets:
            key = (s, tuple(images[j] for j in s))
            joints[key] = joints.get(key, 0) + 1

    uniform = Fraction(1, q**d)
    max_marg = Fraction(0)
    for j in range(n):
        for value in itertools.product(range(q), repeat=d):
            p = Fraction(marginals.get((j, value), 0), states)
            max_marg = max(max_marg, abs(p - uniform))

    max_joint = Fraction(0)
    for (s, values), count in joints.items():
        p = Fraction(count, states)
        expected = Fraction(1)
        for j, v in zip(s, values):
            expected *= Fraction(marginals.get((j, v), 0), states)
        max_joint = max(max_joint, abs(p - expected))
    # Unseen joint combinations still have a nonzero product of marginals.
    for s in subsets:
        for values in itertools.product(itertools.product(range(q), repeat=d), repeat=len(s)):
            if (s, values) in joints:
                continue
            expected = Fraction(1)
            for j, v in zip(s, values):
                expected *= Fraction(marginals.get((j, v), 0), states)
            max_joint = max(max_joint, expected)
    return ExactCheckResult("ordered", q, m, n, d, states, max_marg, max_joint)


def _exact_unordered(q, m, n, d, cols, states, mixture_weight, block_probability) -> ExactCheckResult:
    w = Fraction(1, q**d) if mixture_weight is None else Fraction(mixture_weight)
    b = Fraction(1, q**d) if block_probability is None else Fraction(block_probability)

    col_marg: dict = {}
    col_joint: dict = {}
    for rows in _enumerate_maps(q, d, m):
        images = [_apply(rows, col, q) for col in cols]
        for j, img in enumerate(images):
            col_marg[(j, img)] = col_marg.get((j, img), 0) + 1
        for i in range(n):
            for j in range(i + 1, n):
                key = (i, images[i], j, images[j])
                col_joint[key] = col_joint.get(key, 0) + 1

    vectors = list(itertools.product(range(q), repeat=d))
    uniform = Fraction(1, q**d)

    def marginal(v, i) -> Fraction:
        return (1 - w) * Fraction(col_marg.get((i, v), 0), states) + w * b

    max_marg = Fraction(0)
    for i in range(n):
        for v in vectors:
            max_marg = max(max_marg, abs(marginal(v, i) - uniform))

    max_joint = Fraction(0)
    elements = [(v, i) for i in range(n) for v in vectors]
    for a in range(len(elements)):
        v, i = elements[a]
        for bidx in range(a + 1, len(elements)):
            u, j = elements[bidx]
            if i == j:
                # Explicit branch never lists two vectors under one label;
                # only a full block includes both, with a single coin.
                joint = w * b
            else:
                if i < j:
                    key = (i, v, j, u)
                else:
                    key = (j, u, i, v)
                joint = (1 - w) * Fraction(col_joint.get(key, 0), states) + w * b * b
            product = marginal(v, i) * marginal(u, j)
            max_joint = max(max_joint, abs(joint - product))
    return ExactCheckResult("unordered", q, m, n, d, states, max_marg, max_joint)


def exact_prophet_weight_check(d: int = 2, kappa: int = 1) -> ExactCheckResult:
    """Exact enumeration of the toy prophet weight distribution.

    At kappa = 1 the designed block is deterministic, so enumerating the
    random map and folding in the mixture analytically covers the whole
    tape.  Weight events coincide with membership events (weight 2^level
    versus zero), so a zero deviation here is exactly the pairwise weight
    independence claim at toy scale, same-label pairs included.
    """
    params = ProphetParams(d, kappa)
    if kappa != 1:
        raise ValueError("the exact toy check enumerates a single level")
    rng = np.random.default_rng(0)  # kappa = 1: the construction is deterministic
    nested = pifam.sigma_prophet(d, kappa, rng)
    sigma = nested.sigmas[0]
    return exact_pairwise_check(
        "unordered", 2, sigma.rows, sigma.cols, params.ambient_dim, sigma=sigma
    )


# ---------------------------------------------------------------------------
# CRS hardness gap


@dataclass(frozen=True)
class CrsGapReport:
    q: int
    d: int
    c: int
    trials: int
    rank_estimate: Estimate
    rank_estimate_unbiased: Estimate
    d1_rank_mean: float
    d2_rank_exact: Fraction
    active_size_exact: Fraction
    ratio_estimate: Estimate
    paper_bound: Fraction
    vacuous: bool


def crs_hardness_gap(
    q: int,
    d: int,
    c: int,
    trials: int,
    rng: np.random.Generator,
    *,
    threads: int = 1,
    sigmas: float = DEFAULT_SIGMAS,
) -> CrsGapReport:
    """Stratified estimate of E[Rank(A)] / E[|A|] for the CRS instance.

    The explicit branch is sampled; the correlated branch is folded in
    analytically with its worst-case rank d (weight 1/q^d), so the reported
    mean is a certified upper bound in expectation.  E[|A|] = d exactly.
    """
    instance = CrsInstance(q, d, c)
    sigma = instance.sigma

    def chunk(stream: np.random.Generator, count: int) -> Accumulator:
        acc = Accumulator()
        for _ in range(count):
            r = FieldMatrix.from_rows(
                stream.integers(0, q, size=(d, c)).tolist(), q
            )
            acc = acc.add(float(r.multiply(sigma).rank()))
        return acc

    acc = run_chunks(chunk, trials, rng, threads=threads)
    d1 = Estimate.from_accumulator(acc, sigmas)
    w_exact = Fraction(1, q**d)
    w = float(w_exact)
    # Conditioned on the correlated branch the rank is d iff some label
    # drew its full block: exactly d (1 - (1 - 1/q^d)^d) in expectation.
    d2_exact = d * (1 - (1 - w_exact) ** d)
    stratified = d1.scaled(1.0 - w, offset=w * d)
    unbiased = d1.scaled(1.0 - w, offset=w * float(d2_exact))
    bound = Fraction(c + 1, d)
    return CrsGapReport(
        q=q,
        d=d,
        c=c,
        trials=trials,
        rank_estimate=stratified,
        rank_estimate_unbiased=unbiased,
        d1_rank_mean=d1.mean,
        d2_rank_exact=d2_exact,
        active_size_exact=instance.expected_active_size(),
        ratio_estimate=stratified.scaled(1.0 / d),
        paper_bound=bound,
        vacuous=bound >= 1,
    )


def crs_naive_rank_estimate(
    q: int, d: int, c: int, trials: int, rng: np.random.Generator, sigmas: float = DEFAULT_SIGMAS
) -> Estimate:
    """Unstratified E[Rank(A)] through the full sampling pipeline; the
    cross-check counterpart of the stratified estimator."""
    instance = CrsInstance(q, d, c)
    matroid = instance.matroid
    acc = Accumulator()
    for _ in range(trials):
        acc = acc.add(float(matroid.rank(instance.sample(rng))))
    return Estimate.from_accumulator(acc, sigmas)


# ---------------------------------------------------------------------------
# Balance certification (the numeric certifier criterion)


class FGroundSet:
    name = "ground-set"

    def intersect(self, active, matroid):
        if isinstance(active, pifam.ActiveSet):
            return active.size(), matroid.rank(active)
        elems = list(active)
        return len(elems), matroid.rank(elems)


@dataclass(frozen=True)
class FExplicit:
    """An explicit element family; suits small ground sets."""

    name: str
    elements: frozenset

    def intersect(self, active, matroid):
        if isinstance(active, pifam.ActiveSet):
            hit = [e for e in active.explicit if e in self.elements]
            hit.extend(e for e in self.elements
                       if isinstance(e, LabeledVector) and e.label in active.full_blocks)
            hit = list(dict.fromkeys(hit))
        else:
            hit = [e for e in active if e in self.elements]
        return len(hit), matroid.rank(hit)


@dataclass(frozen=True)
class FLabelClass:
    """All vectors carrying one of the given labels."""

    labels: frozenset

    @property
    def name(self) -> str:
        return f"labels{sorted(self.labels)}"

    def intersect(self, active: pifam.ActiveSet, matroid):
        blocks = active.full_blocks & self.labels
        explicit = [e for e in active.explicit if e.label in self.labels]
        size = len(explicit) + len(blocks) * active.q**active.dim
        if blocks:
            rank = matroid.full_rank
        else:
            rank = matroid.rank(explicit)
        return size, rank


@dataclass(frozen=True)
class FFlat:
    """A flat (span of fixed vectors) crossed with every label."""

    vectors: frozenset
    rank: int

    @property
    def name(self) -> str:
        return f"flat(rank {self.rank})"

    def intersect(self, active: pifam.ActiveSet, matroid):
        explicit = [e for e in active.explicit if e.vector in self.vectors]
        size = len(explicit) + len(active.full_blocks) * len(self.vectors)
        if active.full_blocks:
            rank = self.rank
        else:
            rank = matroid.rank_of_vectors([e.vector for e in explicit])
        return size, rank


@dataclass(frozen=True)
class FamilyOutcome:
    name: str
    ratio: Estimate
    insufficient: bool


@dataclass(frozen=True)
class CertifierReport:
    """One-sided balance certificate: a failed family is conclusive for
    that family, a pass is evidence only (the criterion quantifies over all
    element sets)."""

    target: float
    families: tuple[FamilyOutcome, ...]
    min_ratio: Estimate
    verdict: bool

    def passes(self, target: float) -> bool:
        return all(
            f.insufficient or f.ratio.ci_high >= target for f in self.families
        )


def certify_balance(
    sampler: Callable[[np.random.Generator], object],
    matroid,
    target: float,
    families: Sequence,
    trials: int,
    rng: np.random.Generator,
    *,
    sigmas: float = DEFAULT_SIGMAS,
) -> CertifierReport:
    """Estimate E[Rank(A & F)] / E[|A & F|] for each family and compare to
    the target balance ratio.  The verdict fails iff some family's interval
    upper bound sits below the target."""
    accs = [RatioAccumulator() for _ in families]
    for _ in range(trials):
        active = sampler(rng)
        for idx, fam in enumerate(families):
            size, rank = fam.intersect(active, matroid)
            accs[idx] = accs[idx].add(float(rank), float(size))
    outcomes = []
    for fam, acc in zip(families, accs):
        insufficient = acc.sum_y == 0
        outcomes.append(FamilyOutcome(fam.name, acc.estimate(sigmas), insufficient))
    with_data = [o for o in outcomes if not o.insufficient]
    min_ratio = min(
        (o.ratio for o in with_data), key=lambda e: e.mean,
        default=Estimate(float("nan"), 0, float("nan"), float("nan"), float("nan"), sigmas),
    )
    report = CertifierReport(
        target=target,
        families=tuple(outcomes),
        min_ratio=min_ratio,
        verdict=all(o.insufficient or o.ratio.ci_high >= target for o in outcomes),
    )
    return report


def crs_families(instance: CrsInstance, rng: np.random.Generator, n_random: int = 3) -> list:
    """The structured families tested on the CRS instance: full ground set,
    random explicit subsets, random flats x labels, label classes."""
    q, d = instance.q, instance.d
    fams: list = [FGroundSet()]
    for t in range(n_random):
        elements = set()
        for _ in range(2 * d):
            vec = tuple(int(x) for x in rng.integers(0, q, size=d))
            if not any(vec):
                continue
            v = vec if q != 2 else sum(b << i for i, b in enumerate(vec))
            elements.add(LabeledVector(v, int(rng.integers(1, d + 1))))
        fams.append(FExplicit(f"random-subset-{t}", frozenset(elements)))
    for t in range(n_random):
        r = int(rng.integers(1, min(d, 2) + 1))
        vecs: list = []
        while len(vecs) < r:
            vec = tuple(int(x) for x in rng.integers(0, q, size=d))
            if not any(vec):
                continue
            v = vec if q != 2 else sum(b << i for i, b in enumerate(vec))
            if instance.matroid.rank_of_vectors(vecs + [v]) == len(vecs) + 1:
                vecs.append(v)
        fams.append(FFlat(frozenset(_span_vectors(vecs, q, d)), r))
    half = frozenset(range(1, d // 2 + 1))
    fams.append(FLabelClass(half))
    return fams


# ---------------------------------------------------------------------------
# Disjunction lower bound


@dataclass(frozen=True)
class DisjunctionReport:
    sum_probability: float
    pairwise_bound: float
    independent_baseline: float
    disjunction: Estimate
    marginals: tuple[Estimate, ...]
    ok: bool


def disjunction_bound_check(
    probabilities: Sequence[float],
    joint_sampler: Callable[[np.random.Generator], Sequence[bool]],
    trials: int,
    rng: np.random.Generator,
    *,
    sigmas: float = DEFAULT_SIGMAS,
    marginal_sigmas: float = 5.0,
) -> DisjunctionReport:
    """Check the pairwise-independent disjunction lower bounds.

    Verifies the sampler's marginals first, then that the probability of
    at least one event clears both sum/(1+sum) and 1/1.299 times the
    mutually-independent baseline, within the confidence interval.
    """
    k = len(probabilities)
    event_counts = [0] * k
    any_count = 0
    for _ in range(trials):
        events = joint_sampler(rng)
        if len(events) != k:
            raise ValueError("sampler arity disagrees with the probability vector")
        hit = False
        for i, e in enumerate(events):
            if e:
                event_counts[i] += 1
                hit = True
        any_count += hit
    marginals = tuple(Estimate.binomial(c, trials, sigmas) for c in event_counts)
    for p, est in zip(probabilities, marginals):
        slack = marginal_sigmas * max(est.std_error, math.sqrt(p * (1 - p) / trials))
        if abs(est.mean - p) > slack + 1e-12:
            raise ValueError(
                f"marginal mismatch: observed {est.mean:.5f}, declared {p:.5f}"
            )
    total = float(sum(probabilities))
    lb_sum = total / (1.0 + total)
    independent = 1.0 - math.prod(1.0 - p for p in probabilities)
    lb_ind = independent / 1.299
    disj = Estimate.binomial(any_count, trials, sigmas)
    ok = disj.ci_high >= lb_sum and disj.ci_high >= lb_ind
    return DisjunctionReport(
        sum_probability=total,
        pairwise_bound=lb_sum,
        independent_baseline=independent,
        disjunction=disj,
        marginals=marginals,
        ok=ok,
    )


# ---------------------------------------------------------------------------
# Prophet hardness gap


@dataclass(frozen=True)
class PolicyOutcome:
    name: str
    reward: Estimate
    ratio_to_prophet: Estimate


@dataclass(frozen=True)
class ProphetGapReport:
    d: int
    kappa: int
    trials: int
    prophet: Estimate
    policies: tuple[PolicyOutcome, ...]
    prophet_stated_bound: float
    gambler_stated_bound: float
    ratio_stated_bound: float
    observed_prophet_constant: float
    rejections: int
    note: str = (
        "the suite witnesses specific gamblers; the stated bound quantifies "
        "over all gamblers and cannot be certified by testing"
    )

    @property
    def best_policy(self) -> PolicyOutcome:
        return max(self.policies, key=lambda p: p.reward.mean)


def prophet_hardness_gap(
    d: int,
    kappa: int,
    trials: int,
    rng: np.random.Generator,
    *,
    aux_trials: int = 300,
    sigmas: float = DEFAULT_SIGMAS,
) -> ProphetGapReport:
    """Prophet versus gambler-policy rewards, conditioned on the hardness
    event by rejection sampling.

    The prophet value is the offline maximum-weight independent set; each
    suite policy is simulated under the fixed level-ascending order.  The
    bucketing policy's layout and bucket choice are estimated once from an
    auxiliary sample before the measured trials.
    """
    params = ProphetParams(d, kappa)
    matroid = DuplicatedLinearMatroid(2, params.ambient_dim, params.n)

    aux_prophet = Accumulator()
    aux_draws = []
    rejections = 0
    for _ in range(aux_trials):
        sample = sample_prophet_instance(d, kappa, rng, condition_on_e_hard=True)
        rejections += sample.rejections
        value, _ = matroid.weighted_rank(dict(sample.candidates), [e for e, _ in sample.candidates])
        aux_prophet = aux_prophet.add(value)
        aux_draws.append(sample.candidates)
    opt_est = aux_prophet.total / max(aux_prophet.count, 1)
    layout = schemes.bucket_layout(opt_est, matroid.full_rank)
    bucket_est = schemes.estimate_bucket_opts(matroid, aux_draws, layout)
    chosen = schemes.choose_bucket(bucket_est)

    policies = schemes.gambler_policy_suite(params.level_sizes, bucketing=(layout, chosen))
    prophet_acc = Accumulator()
    policy_accs = {p.name: Accumulator() for p in policies}
    ratio_accs = {p.name: RatioAccumulator() for p in policies}
    for _ in range(trials):
        sample = sample_prophet_instance(d, kappa, rng, condition_on_e_hard=True)
        rejections += sample.rejections
        weights = dict(sample.candidates)
        prophet_value, _ = matroid.weighted_rank(weights, list(weights))
        prophet_acc = prophet_acc.add(prophet_value)
        for policy in policies:
            value, _ = schemes.run_policy(policy, sample, rng)
            policy_accs[policy.name] = policy_accs[policy.name].add(value)
            ratio_accs[policy.name] = ratio_accs[policy.name].add(value, prophet_value)

    prophet_est = Estimate.from_accumulator(prophet_acc, sigmas)
    outcomes = tuple(
        PolicyOutcome(
            name,
            Estimate.from_accumulator(policy_accs[name], sigmas),
            ratio_accs[name].estimate(sigmas),
        )
        for name in policy_accs
    )
    return ProphetGapReport(
        d=d,
        kappa=kappa,
        trials=trials,
        prophet=prophet_est,
        policies=outcomes,
        prophet_stated_bound=kappa * d / 10.0,
        gambler_stated_bound=2.0 * d,
        ratio_stated_bound=10.0 / kappa,
        observed_prophet_constant=prophet_est.mean / (kappa * d),
        rejections=rejections,
    )


# ---------------------------------------------------------------------------
# OCRS balance


@dataclass(frozen=True)
class AdversaryBalance:
    adversary: str
    qualifying_elements: int
    insufficient_elements: int
    loop_occurrences: int
    min_ci_low: float
    min_mean: float
    worst_element: object
    pooled: Estimate
    pooled_plain: Estimate


@dataclass(frozen=True)
class OcrsBalanceReport:
    trials: int
    min_occurrences: int
    d1_factor: float
    per_adversary: tuple[AdversaryBalance, ...]

    def worst_min_ci_low(self) -> float:
        return min(a.min_ci_low for a in self.per_adversary)


def ocrs_balance(
    scheme,
    sampler: Callable[[np.random.Generator], Sequence],
    adversaries: Mapping[str, Callable],
    trials: int,
    rng: np.random.Generator,
    *,
    min_occurrences: int = 30,
    d1_factor: float = 1.0,
    sigmas: float = DEFAULT_SIGMAS,
    trace: Callable | None = None,
) -> OcrsBalanceReport:
    """Per-element conditional selection probabilities under each adversary.

    Uses the scheme's conditional estimator (coin forced to heads, run
    replayed) per active occurrence, which is unbiased for
    Pr[selected | active] with variance small enough for per-element
    intervals.  Loops are tallied but excluded from the minimum: no scheme
    can select a loop, and the balance criterion presumes loop marginals
    are zero.  ``d1_factor`` scales estimates one-sidedly when the sampler
    conditions away an analytically bounded branch.
    """
    stats_per: dict[str, dict] = {name: {} for name in adversaries}
    loops = {name: 0 for name in adversaries}
    plain: dict[str, Accumulator] = {name: Accumulator() for name in adversaries}
    pooled: dict[str, Accumulator] = {name: Accumulator() for name in adversaries}

    for _ in range(trials):
        active = sampler(rng)
        elements = list(active)
        non_loops = [e for e in elements if not _is_loop(e)]
        coins = scheme.coins(non_loops, rng)
        for e in elements:
            if _is_loop(e):
                coins[e] = False
        for name, adversary in adversaries.items():
            order = adversary(elements, coins)
            accepted = scheme.run(order, coins, trace=trace)
            accepted_set = set(accepted)
            for e in non_loops:
                contribution = scheme.selection_probability_given_active(
                    e, elements, coins, adversary
                )
                entry = stats_per[name].setdefault(e, [0, 0.0, 0.0])
                entry[0] += 1
                entry[1] += contribution
                entry[2] += contribution * contribution
                pooled[name] = pooled[name].add(contribution)
                plain[name] = plain[name].add(1.0 if e in accepted_set else 0.0)
            loops[name] += len(elements) - len(non_loops)

    reports = []
    for name in adversaries:
        qualifying = {
            e: v for e, v in stats_per[name].items() if v[0] >= min_occurrences
        }
        insufficient = len(stats_per[name]) - len(qualifying)
        min_ci = float("inf")
        min_mean = float("inf")
        worst = None
        for e, (n, s, s2) in qualifying.items():
            est = Estimate.from_accumulator(Accumulator(n, s, s2), sigmas).scaled(d1_factor)
            if est.ci_low < min_ci:
                min_ci = est.ci_low
                worst = e
            min_mean = min(min_mean, est.mean)
        reports.append(
            AdversaryBalance(
                adversary=name,
                qualifying_elements=len(qualifying),
                insufficient_elements=insufficient,
                loop_occurrences=loops[name],
                min_ci_low=min_ci if qualifying else float("nan"),
                min_mean=min_mean if qualifying else float("nan"),
                worst_element=worst,
                pooled=Estimate.from_accumulator(pooled[name], sigmas).scaled(d1_factor),
                pooled_plain=Estimate.from_accumulator(plain[name], sigmas),
            )
        )
    return OcrsBalanceReport(
        trials=trials,
        min_occurrences=min_occurrences,
        d1_factor=d1_factor,
        per_adversary=tuple(reports),
    )


def _is_loop(e) -> bool:
    v = e.vector if isinstance(e, LabeledVector) else e
    return v == 0 if isinstance(v, int) else not any(v)


def crs_ocrs_balance(
    q: int,
    d: int,
    c: int,
    trials: int,
    rng: np.random.Generator,
    *,
    adversaries: Mapping[str, Callable] | None = None,
    min_occurrences: int = 30,
    sigmas: float = DEFAULT_SIGMAS,
    trace: Callable | None = None,
) -> OcrsBalanceReport:
    """Greedy OCRS balance on the CRS hard instance under the standard
    adversary orders, sampling the explicit branch and folding the
    correlated branch into a one-sided factor 1 - 1/q^d."""
    instance = CrsInstance(q, d, c)
    scheme = schemes.GreedyOcrs(instance.matroid)
    if adversaries is None:
        adversaries = schemes.ADVERSARY_ORDERS
    factor = 1.0 - float(instance.marginal())
    return ocrs_balance(
        scheme,
        lambda r: instance.sample_d1(r).explicit,
        adversaries,
        trials,
        rng,
        min_occurrences=min_occurrences,
        d1_factor=factor,
        sigmas=sigmas,
        trace=trace,
    )


# ---------------------------------------------------------------------------
# Prophet benchmarks (single-choice, partition, bucketing)


@dataclass(frozen=True)
class BenchmarkReport:
    name: str
    trials: int
    gambler: Estimate
    prophet: Estimate
    ratio: Estimate
    target: float

    @property
    def ok(self) -> bool:
        return self.ratio.ci_high >= self.target


def _packed_family_sampler(n: int):
    """Supports of the designed columns for a GF(2) family of n values;
    returns (supports, m) for the smallest admissible design dimension m."""
    m = 1
    while 2 ** (m - 1) < n:
        m += 1
    sigma = pifam.sigma_crs(2, m, n)
    supports = [
        tuple(i for i in range(m) if sigma.entries[i][j]) for j in range(n)
    ]
    return supports, m


def _sample_values(supports, m: int, d: int, rng: np.random.Generator) -> list[int]:
    """Pairwise-independent uniform values on [0, 2^d) via a random map."""
    cols = [int(x) for x in rng.integers(0, 2**d, size=m, dtype=np.uint64)]
    values = []
    for sup in supports:
        v = 0
        for c in sup:
            v ^= cols[c]
        values.append(v)
    return values


def rank_one_benchmark(
    trials: int,
    rng: np.random.Generator,
    *,
    n_elements: int = 5,
    d: int = 10,
    calibration_trials: int = 4096,
    sigmas: float = DEFAULT_SIGMAS,
) -> BenchmarkReport:
    """Single-choice threshold prophet on pairwise-independent uniform
    values built from the random-map family; target ratio 1/3."""
    supports, m = _packed_family_sampler(n_elements)

    def draw(r):
        return _sample_values(supports, m, d, r)

    threshold = schemes.calibrate_threshold(
        lambda r: max(draw(r)), calibration_trials, rng
    )
    acc = RatioAccumulator()
    gambler_acc = Accumulator()
    prophet_acc = Accumulator()
    for _ in range(trials):
        values = draw(rng)
        stream = list(enumerate(values))
        pick = schemes.single_choice_prophet(stream, threshold)
        gambler = float(pick[1]) if pick is not None else 0.0
        prophet = float(max(values))
        acc = acc.add(gambler, prophet)
        gambler_acc = gambler_acc.add(gambler)
        prophet_acc = prophet_acc.add(prophet)
    return BenchmarkReport(
        name="rank-one-single-choice",
        trials=trials,
        gambler=Estimate.from_accumulator(gambler_acc, sigmas),
        prophet=Estimate.from_accumulator(prophet_acc, sigmas),
        ratio=acc.estimate(sigmas),
        target=1.0 / 3.0,
    )


def graphic_partition_benchmark(
    trials: int,
    rng: np.random.Generator,
    *,
    graph=None,
    d: int = 10,
    calibration_trials: int = 256,
    sigmas: float = DEFAULT_SIGMAS,
) -> BenchmarkReport:
    """Partition-based prophet on a graphic matroid with pairwise-independent
    weights; the random-permutation partition gives alpha = 1/2 for graphs,
    hence target ratio 1/6."""
    from .matroid import complete_graph, sample_graphic_partition

    if graph is None:
        graph = complete_graph(4)
    n_edges = len(graph.edges)
    supports, m = _packed_family_sampler(n_edges)

    def weight_draw(r) -> dict:
        return dict(enumerate(_sample_values(supports, m, d, r)))

    cache: dict = {}
    acc = RatioAccumulator()
    gambler_acc = Accumulator()
    prophet_acc = Accumulator()
    for _ in range(trials):
        weights = weight_draw(rng)
        stream = sorted(weights.items())
        value, _accepted = schemes.partition_prophet(
            graph,
            lambda r: sample_graphic_partition(graph, r),
            weight_draw,
            stream,
            rng,
            calibration_trials=calibration_trials,
            threshold_cache=cache,
        )
        prophet, _ = graph.weighted_rank(weights, list(weights))
        acc = acc.add(value, prophet)
        gambler_acc = gambler_acc.add(value)
        prophet_acc = prophet_acc.add(prophet)
    return BenchmarkReport(
        name="graphic-partition-prophet",
        trials=trials,
        gambler=Estimate.from_accumulator(gambler_acc, sigmas),
        prophet=Estimate.from_accumulator(prophet_acc, sigmas),
        ratio=acc.estimate(sigmas),
        target=1.0 / 6.0,
    )


@dataclass(frozen=True)
class BucketingBenchmarkReport:
    d: int
    kappa: int
    trials: int
    opt_estimate: float
    k: int
    chosen_bucket: int
    reward: Estimate
    guarantee: float

    @property
    def ok(self) -> bool:
        return self.reward.ci_low >= self.guarantee


def prophet_bucketing_benchmark(
    d: int,
    kappa: int,
    trials: int,
    rng: np.random.Generator,
    *,
    aux_trials: int = 300,
    sigmas: float = DEFAULT_SIGMAS,
) -> BucketingBenchmarkReport:
    """Run the bucketing prophet on the leveled hard instance and compare
    its mean reward with the opt/(4 (k+1)) guarantee."""
    params = ProphetParams(d, kappa)
    matroid = DuplicatedLinearMatroid(2, params.ambient_dim, params.n)

    aux_values = Accumulator()
    draws = []
    for _ in range(aux_trials):
        sample = sample_prophet_instance(d, kappa, rng, condition_on_e_hard=True)
        value, _ = matroid.weighted_rank(dict(sample.candidates), [e for e, _ in sample.candidates])
        aux_values = aux_values.add(value)
        draws.append(sample.candidates)
    opt_est = aux_values.total / max(aux_values.count, 1)
    layout = schemes.bucket_layout(opt_est, matroid.full_rank)
    chosen = schemes.choose_bucket(schemes.estimate_bucket_opts(matroid, draws, layout))

    acc = Accumulator()
    for _ in range(trials):
        sample = sample_prophet_instance(d, kappa, rng, condition_on_e_hard=True)
        result = schemes.bucketing_prophet(
            matroid, None, sample.candidates, opt_est, rng, precomputed=(layout, chosen)
        )
        acc = acc.add(result.value)
    reward = Estimate.from_accumulator(acc, sigmas)
    return BucketingBenchmarkReport(
        d=d,
        kappa=kappa,
        trials=trials,
        opt_estimate=opt_est,
        k=layout.k,
        chosen_bucket=chosen,
        reward=reward,
        guarantee=opt_est / (4.0 * (layout.k + 1)),
    )


# ---------------------------------------------------------------------------
# Pairwise actives on a partition matroid (the positive certificate)


@dataclass(frozen=True)
class PartitionActiveBench:
    """A ten-part benchmark whose active events are pairwise independent
    with marginals summing to one per part."""

    parts: int = 10
    part_size: int = 8
    value_dim: int = 3

    def __post_init__(self):
        if self.part_size > 2**self.value_dim:
            raise ValueError("marginals would leave the matroid polytope")

    @property
    def n(self) -> int:
        return self.parts * self.part_size

    @property
    def matroid(self) -> SimplePartitionMatroid:
        return SimplePartitionMatroid.from_parts(
            [range(i * self.part_size, (i + 1) * self.part_size) for i in range(self.parts)]
        )

    @property
    def marginal(self) -> float:
        return 1.0 / 2**self.value_dim

    def _supports(self):
        supports, m = _packed_family_sampler(self.n)
        targets = [(i % (2**self.value_dim - 1)) + 1 for i in range(self.n)]
        return supports, m, targets

    def pairwise_sampler(self) -> Callable[[np.random.Generator], frozenset]:
        """Element i is active iff its family vector hits its fixed target;
        the events are pairwise independent Bernoulli(1/2^value_dim)."""
        supports, m, targets = self._supports()
        dim = self.value_dim

        def sample(rng: np.random.Generator) -> frozenset:
            cols = [int(x) for x in rng.integers(0, 2**dim, size=m, dtype=np.uint64)]
            active = []
            for i, sup in enumerate(supports):
                v = 0
                for c in sup:
                    v ^= cols[c]
                if v == targets[i]:
                    active.append(i)
            return frozenset(active)

        return sample

    def product_sampler(self) -> Callable[[np.random.Generator], frozenset]:
        """Mutually independent actives with the same marginals."""
        p = self.marginal
        n = self.n

        def sample(rng: np.random.Generator) -> frozenset:
            mask = rng.random(n) < p
            return frozenset(int(i) for i in np.nonzero(mask)[0])

        return sample

    def families(self, rng: np.random.Generator, n_random: int = 4) -> list:
        fams: list = [FGroundSet()]
        for i in range(self.parts):
            fams.append(
                FExplicit(f"part-{i}", frozenset(range(i * self.part_size, (i + 1) * self.part_size)))
            )
        for t in range(n_random):
            size = int(rng.integers(2, self.n))
            chosen = rng.choice(self.n, size=size, replace=False)
            fams.append(FExplicit(f"random-subset-{t}", frozenset(int(i) for i in chosen)))
        return fams


PARTITION_BALANCE_TARGET = (1.0 / 1.299) * (1.0 - math.exp(-1.0))
PRODUCT_BALANCE_TARGET = 1.0 - math.exp(-1.0)
