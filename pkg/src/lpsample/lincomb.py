"""Rejection sampling from the p-norm distribution of a linear combination.

Given the matrix sampling structure for A and query access to coefficients x,
a proposal draws column j proportional to ``|x_j|^p ||A^(j)||_p^p`` and then a
row i from column j's own distribution; the proposal is accepted with ratio

    r_i = |sum_j x_j A_ij|^p / (n^(p-1) * sum_j |x_j A_ij|^p),

which Hoelder's inequality keeps in [0, 1].  Accepted rows follow the target
distribution exactly, and the expected number of proposals per accepted
sample is the closed-form constant computed by :func:`exact_m`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ptree import EmptyDistributionError, WeightedMatrixTree, WeightedVectorTree
from .randkit import DistributionSpec, MomentProfile, moment_profile, stream

__all__ = [
    "NonTerminationError",
    "RejectionSampleResult",
    "MpReport",
    "RatioExperimentReport",
    "MpCurvePoint",
    "CombinationSampler",
    "sample_from_combination",
    "exact_m",
    "acceptance_ratios",
    "measure_mp",
    "theoretical_limit",
    "theoretical_mp",
    "run_ratio_experiment",
    "mp_curve",
]

_DEFAULT_ITERATION_CAP = 1_000_000


class NonTerminationError(RuntimeError):
    """The rejection loop hit its iteration cap (typically Ax = 0)."""

    def __init__(self, iterations: int):
        super().__init__(
            f"no proposal accepted after {iterations} iterations; "
            "the combination Ax may be zero or vanishingly small"
        )
        self.iterations = iterations


@dataclass(frozen=True)
class RejectionSampleResult:
    """One accepted sample: its row index, proposals consumed, queries spent."""

    index: int
    iterations: int
    queries: int


@dataclass(frozen=True)
class MpReport:
    """Exact and measured expected iterations per accepted sample."""

    p: float
    m: int
    n: int
    exact: float
    empirical: float | None
    trials: int
    stderr: float | None = None


@dataclass(frozen=True)
class RatioExperimentReport:
    """Mean M(1), M(2) and their per-instance ratio over random draws."""

    m: int
    n: int
    trials: int
    spec_a: str
    spec_x: str
    m1: MpReport
    m2: MpReport
    mean_ratio: float
    stderr_ratio: float
    redraws: int
    outside_theory: bool


@dataclass(frozen=True)
class MpCurvePoint:
    """One (p, n) cell of the iteration-count curve with its Gaussian-limit prediction."""

    p: float
    n: int
    m: int
    trials: int
    mean_m: float
    stderr_m: float
    theory_m: float | None


def exact_m(A, x, p: float) -> float:
    """Closed-form expected proposals per accepted sample,
    ``n^(p-1) * sum_ij |x_j A_ij|^p / sum_i |(Ax)_i|^p``.
    """
    A = np.asarray(A, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if A.ndim != 2 or x.ndim != 1 or A.shape[1] != x.size:
        raise ValueError("A must be (m, n) and x length n")
    n = x.size
    combo = A @ x
    denominator = float(np.sum(np.abs(combo) ** p))
    if denominator == 0.0:
        raise ValueError("Ax is zero: the target distribution is undefined")
    numerator = float(np.abs(x) ** p @ np.sum(np.abs(A) ** p, axis=0))
    return n ** (p - 1.0) * numerator / denominator


def acceptance_ratios(A, x, p: float) -> np.ndarray:
    """Per-row acceptance ratio r_i; rows no proposal can reach are zero."""
    A = np.asarray(A, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    weighted = np.abs(A * x) ** p
    denom = n ** (p - 1.0) * weighted.sum(axis=1)
    num = np.abs(A @ x) ** p
    out = np.zeros(A.shape[0])
    reachable = denom > 0.0
    out[reachable] = num[reachable] / denom[reachable]
    return out


class CombinationSampler:
    """Reusable rejection sampler for one (matrix structure, coefficients) pair.

    Construction performs the O(n) proposal setup: n coefficient queries plus
    n column-norm queries to build an ephemeral vector tree over the proposal
    weights.  Each :meth:`sample` iteration then costs one column draw, one
    row draw, and n entry queries for the acceptance ratio.
    """

    def __init__(self, matrix_tree: WeightedMatrixTree, x, *, max_iterations: int | None = None,
                 expected_iterations: float | None = None):
        self._mt = matrix_tree
        m, n = matrix_tree.shape
        self._p = matrix_tree.p
        if callable(x):
            self._x = np.fromiter((x(j) for j in range(n)), dtype=np.float64, count=n)
        else:
            self._x = np.asarray(x, dtype=np.float64).copy()
        if self._x.shape != (n,):
            raise ValueError(f"coefficients must have length {n}")
        if not np.all(np.isfinite(self._x)):
            raise ValueError("coefficients must be finite")

        col_powers = np.array([matrix_tree.column_pnorm_power(j) for j in range(n)])
        weights = np.abs(self._x) ** self._p * col_powers
        if not np.any(weights > 0):
            raise EmptyDistributionError("every term x_j * column_j is zero")
        self._proposal_tree = WeightedVectorTree._from_magnitudes(
            weights, (weights > 0).astype(np.int8), self._p
        )
        self._setup_queries = 2 * n
        self._scale = n ** (self._p - 1.0)
        if max_iterations is not None:
            self._cap = int(max_iterations)
        elif expected_iterations is not None:
            self._cap = 10_000 * max(1, math.ceil(expected_iterations))
        else:
            self._cap = _DEFAULT_ITERATION_CAP
        self._dense_cache = None

    @property
    def proposal_tree(self) -> WeightedVectorTree:
        return self._proposal_tree

    def sample(self, rng: np.random.Generator) -> RejectionSampleResult:
        """Draw one index from the target distribution.

        Query accounting: 2n setup queries (charged to every result) plus n
        row queries per iteration.
        """
        mt = self._mt
        n = self._x.size
        iterations = 0
        while iterations < self._cap:
            iterations += 1
            j = self._proposal_tree.sample_index(rng)
            i = mt.sample_row(j, rng)
            row = np.fromiter(
                (mt.query_entry(i, jj) for jj in range(n)), dtype=np.float64, count=n
            )
            terms = self._x * row
            denominator = float(np.sum(np.abs(terms) ** self._p))
            ratio = abs(float(terms.sum())) ** self._p / (self._scale * denominator)
            if rng.random() < ratio:
                return RejectionSampleResult(i, iterations, self._setup_queries + iterations * n)
        raise NonTerminationError(iterations)

    def sample_many(self, rng: np.random.Generator, count: int) -> tuple[np.ndarray, int]:
        """Draw ``count`` accepted indices, batching proposals in chunks.

        Returns (indices, total proposals consumed through the last
        acceptance).  Reads the stored matrix once up front, so per-sample
        query accounting does not apply; use :meth:`sample` for that.
        """
        if self._dense_cache is None:
            dense = self._mt.dense()
            ratios = acceptance_ratios(dense, self._x, self._p)
            self._dense_cache = ratios
        ratios = self._dense_cache
        accepted = np.empty(count, dtype=np.int64)
        got = 0
        proposals = 0
        chunk = max(256, min(1 << 18, 2 * count))
        while got < count:
            cols = self._proposal_tree.sample_indices(rng, chunk)
            rows = np.empty(chunk, dtype=np.int64)
            for j in np.unique(cols):
                where = cols == j
                rows[where] = self._mt.column_trees[j].sample_indices(rng, int(where.sum()))
            keep = rng.random(chunk) < ratios[rows]
            kept = rows[keep]
            take = min(count - got, kept.size)
            accepted[got : got + take] = kept[:take]
            if got + take == count:
                # final chunk: count proposals only through the one that
                # produced the last sample we keep
                position = np.flatnonzero(keep)[take - 1] + 1
                proposals += int(position)
            else:
                proposals += chunk
                if kept.size == 0 and proposals >= self._cap:
                    raise NonTerminationError(proposals)
            got += take
        return accepted, proposals


def sample_from_combination(
    matrix_tree: WeightedMatrixTree,
    x,
    rng: np.random.Generator,
    *,
    max_iterations: int | None = None,
) -> RejectionSampleResult:
    """One-shot rejection sample; builds the O(n) proposal structure per call."""
    sampler = CombinationSampler(matrix_tree, x, max_iterations=max_iterations)
    return sampler.sample(rng)


def measure_mp(A, x, p: float, samples: int, rng: np.random.Generator) -> MpReport:
    """Run the rejection sampler and compare measured iterations to the closed form."""
    A = np.asarray(A, dtype=np.float64)
    exact = exact_m(A, x, p)
    sampler = CombinationSampler(WeightedMatrixTree(A, p), x, expected_iterations=exact)
    _, proposals = sampler.sample_many(rng, samples)
    empirical = proposals / samples
    # proposals per accepted sample are geometric with mean M
    stderr = math.sqrt(max(exact * (exact - 1.0), 0.0) / samples)
    m, n = A.shape
    return MpReport(p, m, n, exact, empirical, samples, stderr)


def theoretical_limit(profile: MomentProfile) -> float:
    """Large-size limit of M(p) / n^(p/2) for i.i.d. zero-mean entries."""
    return profile.mu_p ** 2 / profile.mu_tilde_p


def theoretical_mp(profile: MomentProfile, n: int) -> float:
    """Limit prediction for M(p) at width n: ``n^(p/2) * mu_p^2 / mu_tilde_p``."""
    return n ** (profile.p / 2.0) * theoretical_limit(profile)


def _draw_instance(spec_a, spec_x, m, n, rng, max_redraws):
    """Draw (A, x) and redraw while Ax is exactly zero; returns redraw count."""
    redraws = 0
    while True:
        A = spec_a.sample(rng, (m, n))
        x = spec_x.sample(rng, n)
        if np.any(A @ x != 0.0):
            return A, x, redraws
        redraws += 1
        if redraws > max_redraws:
            raise NonTerminationError(redraws)


def run_ratio_experiment(
    m: int,
    n: int,
    spec_a: DistributionSpec,
    spec_x: DistributionSpec,
    trials: int,
    seed: int,
    *,
    max_redraws: int = 100,
) -> RatioExperimentReport:
    """Average M(1), M(2) and the per-instance ratio M(2)/M(1) over fresh draws.

    Each trial owns stream (seed, trial) so results replay under any
    parallel schedule.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    m1 = np.empty(trials)
    m2 = np.empty(trials)
    redraws = 0
    for t in range(trials):
        rng = stream(seed, t)
        A, x, extra = _draw_instance(spec_a, spec_x, m, n, rng, max_redraws)
        redraws += extra
        m1[t] = exact_m(A, x, 1.0)
        m2[t] = exact_m(A, x, 2.0)
    ratio = m2 / m1

    def _report(p, vals):
        stderr = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else None
        return MpReport(p, m, n, float(vals.mean()), None, trials, stderr)

    stderr_ratio = float(ratio.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return RatioExperimentReport(
        m=m,
        n=n,
        trials=trials,
        spec_a=spec_a.label(),
        spec_x=spec_x.label(),
        m1=_report(1.0, m1),
        m2=_report(2.0, m2),
        mean_ratio=float(ratio.mean()),
        stderr_ratio=stderr_ratio,
        redraws=redraws,
        outside_theory=spec_a.mean() != 0.0,
    )


def mp_curve(
    m: int,
    n: int,
    spec: DistributionSpec,
    p_grid,
    trials: int,
    seed: int,
    *,
    max_redraws: int = 100,
) -> list[MpCurvePoint]:
    """Empirical mean of M(p) across a p grid, with the limit prediction.

    Both the matrix and the coefficients are drawn from ``spec``; the theory
    column is emitted only for zero-mean families, where the limit applies.
    """
    p_grid = [float(p) for p in p_grid]
    if not p_grid:
        raise ValueError("p grid must be non-empty")
    values = np.empty((len(p_grid), trials))
    for t in range(trials):
        rng = stream(seed, t)
        A, x, _ = _draw_instance(spec, spec, m, n, rng, max_redraws)
        for k, p in enumerate(p_grid):
            values[k, t] = exact_m(A, x, p)

    zero_mean = spec.mean() == 0.0
    points = []
    for k, p in enumerate(p_grid):
        theory = None
        if zero_mean:
            profile = moment_profile(spec, p, mode="auto", seed=seed)
            theory = theoretical_mp(profile, n)
        stderr = float(values[k].std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
        points.append(MpCurvePoint(p, n, m, trials, float(values[k].mean()), stderr, theory))
    return points
