"""Monte Carlo tail estimators and per-sample event checks.

Trial ``i`` of a run with master seed ``s`` draws all its randomness from
``RandomSeed(s, i)``. A run is a map over trial indices followed by a count,
so splitting it across threads or chunks and merging the counts gives the
same answer as a single pass.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from statistics import NormalDist
from typing import Callable, Mapping, Sequence

import numpy as np

from .ensembles import EnsembleSpec, RandomSeed, draw_matrix, generator, sample_vectors
from .geometry import (
    Compressibility,
    DecompositionParams,
    SpreadParams,
    classify_compressible,
    dist_to_sparse,
    sample_spread,
)
from .linalg import (
    DegenerateSampleError,
    complement_basis,
    hs_norm,
    orthonormal_basis,
    projected_block,
    smallest_singular_values,
)

log = logging.getLogger(__name__)

Z95 = NormalDist().inv_cdf(0.975)
NORMALIZATIONS = ("absolute", "sqrt_N", "eps_over_sqrt_n", "indep_columns")
# streams reserved for per-run (not per-trial) randomness
AUX_STREAM = 2**64 - 1


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    return max(0.0, min(p, center - half)), min(1.0, max(p, center + half))


@dataclass(frozen=True)
class TailEstimate:
    """Binomial estimate of one event probability with a 95% Wilson interval."""

    trials: int
    successes: int
    threshold: float = math.nan
    normalization: str = "absolute"
    master_seed: int = 0
    discarded_degenerate: int = 0

    def __post_init__(self):
        if not 0 <= self.successes <= self.trials:
            raise ValueError("successes must lie in [0, trials]")

    @property
    def p_hat(self) -> float:
        return self.successes / self.trials if self.trials else math.nan

    @property
    def ci(self) -> tuple[float, float]:
        return wilson_interval(self.successes, self.trials)

    @property
    def ci_low(self) -> float:
        return self.ci[0]

    @property
    def ci_high(self) -> float:
        return self.ci[1]

    @property
    def rule_of_three(self) -> float | None:
        """3/trials upper bound, reported only when no event was seen."""
        return 3.0 / self.trials if self.successes == 0 and self.trials else None

    def merge(self, other: "TailEstimate") -> "TailEstimate":
        same = (self.threshold == other.threshold) or (
            math.isnan(self.threshold) and math.isnan(other.threshold)
        )
        if not same or self.normalization != other.normalization:
            raise ValueError("can only merge estimates of the same event")
        return replace(
            self,
            trials=self.trials + other.trials,
            successes=self.successes + other.successes,
            discarded_degenerate=self.discarded_degenerate + other.discarded_degenerate,
        )

    __add__ = merge

    def as_dict(self) -> dict:
        lo, hi = self.ci
        return {
            "threshold": self.threshold,
            "normalization": self.normalization,
            "trials": self.trials,
            "successes": self.successes,
            "p_hat": self.p_hat,
            "ci_low": lo,
            "ci_high": hi,
            "rule_of_three": self.rule_of_three,
            "master_seed": self.master_seed,
            "discarded_degenerate": self.discarded_degenerate,
        }


# -- trial engine -----------------------------------------------------------

BatchFn = Callable[[list[RandomSeed]], np.ndarray]


def run_trials(
    batch: BatchFn,
    trials: int,
    master: int,
    *,
    start: int = 0,
    threads: int = 1,
    chunk: int = 512,
) -> np.ndarray:
    """Evaluate ``batch`` on streams ``start .. start+trials-1``.

    ``batch`` maps a list of seeds to one row of statistics per seed, NaN
    marking a discarded degenerate sample. Rows come back in trial order.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    bounds = [(a, min(a + chunk, start + trials)) for a in range(start, start + trials, chunk)]

    def work(ab):
        a, b = ab
        return np.asarray(batch([RandomSeed(master, i) for i in range(a, b)]), dtype=float)

    if threads <= 1 or len(bounds) == 1:
        parts = [work(ab) for ab in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    return np.concatenate(parts)


def count_events(
    values: np.ndarray,
    cutoffs: Sequence[float],
    nominal: Sequence[float],
    *,
    master: int,
    normalization: str = "absolute",
    mode: str = "le",
) -> list[TailEstimate]:
    """TailEstimates of {value <= cutoff} (``le``), {value < cutoff} (``lt``)
    or {value >= cutoff} (``ge``); NaN values count as discards."""
    values = np.asarray(values, dtype=float)
    valid = values[~np.isnan(values)]
    discarded = values.size - valid.size
    if discarded:
        log.info("discarded %d degenerate samples (seed %d)", discarded, master)
    ops = {"le": np.less_equal, "lt": np.less, "ge": np.greater_equal}
    out = []
    for cut, t in zip(cutoffs, nominal):
        hits = int(np.count_nonzero(ops[mode](valid, cut)))
        out.append(TailEstimate(valid.size, hits, float(t), normalization, master, discarded))
    return out


def _collect(batch, trials, master, threads, *, enough=None, max_trials=None) -> np.ndarray:
    """Run ``trials`` trials, then keep doubling while ``enough`` is unmet."""
    values = run_trials(batch, trials, master, threads=threads)
    limit = max_trials or trials
    while enough is not None and not enough(values) and values.shape[0] < limit:
        extra = min(values.shape[0], limit - values.shape[0])
        more = run_trials(batch, extra, master, start=values.shape[0], threads=threads)
        values = np.concatenate([values, more])
        log.info("enlarged run to %d trials", values.shape[0])
    return values


def _as_list(x) -> tuple[list[float], bool]:
    if np.ndim(x) == 0:
        return [float(x)], True
    return [float(v) for v in x], False


def _unwrap(estimates, scalar):
    return estimates[0] if scalar else estimates


def normalization_scale(normalization: str, N: int, n: int) -> float:
    if normalization == "absolute":
        return 1.0
    if normalization == "sqrt_N":
        return math.sqrt(N)
    if normalization == "eps_over_sqrt_n":
        return 1.0 / math.sqrt(n)
    if normalization == "indep_columns":
        return math.sqrt(N + 1) - math.sqrt(n)
    raise ValueError(f"unknown normalization {normalization!r}")


# -- singular value tails ---------------------------------------------------

def sv_batch(spec: EnsembleSpec, N: int, n: int) -> BatchFn:
    def batch(seeds):
        stack = np.stack([draw_matrix(spec, N, n, generator(s)) for s in seeds])
        return smallest_singular_values(stack)

    return batch


def estimate_sv_tail(
    spec: EnsembleSpec,
    N: int,
    n: int,
    thresholds,
    trials: int,
    seed: int,
    normalization: str = "absolute",
    threads: int = 1,
    min_events: int = 0,
    max_trials: int | None = None,
):
    """P(sigma_min(A) <= t * scale) for each threshold t.

    ``normalization`` picks scale: 1, sqrt(N), 1/sqrt(n) or
    sqrt(N+1) - sqrt(n). With ``min_events`` the run doubles (up to
    ``max_trials``) until every threshold has seen that many events.
    """
    if N < n:
        raise ValueError("singular value tails need N >= n")
    ts, scalar = _as_list(thresholds)
    scale = normalization_scale(normalization, N, n)
    cutoffs = [t * scale for t in ts]
    enough = None
    if min_events:
        enough = lambda v: all(np.count_nonzero(v <= c) >= min_events for c in cutoffs)
    values = _collect(sv_batch(spec, N, n), trials, seed, threads, enough=enough, max_trials=max_trials)
    return _unwrap(count_events(values, cutoffs, ts, master=seed, normalization=normalization), scalar)


# -- vector laws ------------------------------------------------------------

def _vector_batch(spec: EnsembleSpec, n: int, stat: Callable[[np.ndarray], np.ndarray]) -> BatchFn:
    def batch(seeds):
        x = np.concatenate([sample_vectors(spec, n, generator(s), 1) for s in seeds])
        return stat(x)

    return batch


def estimate_smallball(spec: EnsembleSpec, n: int, epsilon, y=None, trials: int = 10_000, seed: int = 0, threads: int = 1):
    """P(|X - y| <= epsilon sqrt(n))."""
    eps, scalar = _as_list(epsilon)
    if any(e < 0 for e in eps):
        raise ValueError("epsilon must be non-negative")
    y = np.zeros(n) if y is None else np.asarray(y, dtype=float)
    batch = _vector_batch(spec, n, lambda x: np.linalg.norm(x - y, axis=1))
    values = run_trials(batch, trials, seed, threads=threads)
    cutoffs = [e * math.sqrt(n) for e in eps]
    return _unwrap(count_events(values, cutoffs, eps, master=seed), scalar)


def estimate_paouris(spec: EnsembleSpec, n: int, t, trials: int = 10_000, seed: int = 0, C: float = 3.0, threads: int = 1):
    """P(|X| >= C t sqrt(n))."""
    ts, scalar = _as_list(t)
    if any(v < 1 for v in ts):
        raise ValueError("t must be at least 1")
    if C < 0:
        raise ValueError("C must be non-negative")
    batch = _vector_batch(spec, n, lambda x: np.linalg.norm(x, axis=1))
    values = run_trials(batch, trials, seed, threads=threads)
    cutoffs = [C * v * math.sqrt(n) for v in ts]
    return _unwrap(count_events(values, cutoffs, ts, master=seed, mode="ge"), scalar)


def order_stat_index(n: int, c1: float) -> int:
    """1-based rank ceil(n(1 - c1)) in the decreasing rearrangement."""
    return max(1, math.ceil(n * (1 - c1) - 1e-9))


def estimate_order_stat(spec: EnsembleSpec, n: int, c1: float, r, trials: int = 10_000, seed: int = 0, threads: int = 1):
    """P(|X*_k| <= r), X* the decreasing rearrangement by absolute value and
    k = ceil(n(1 - c1))."""
    if not 0 < c1 < 1:
        raise ValueError("c1 must lie in (0, 1)")
    rs, scalar = _as_list(r)
    if any(v < 0 for v in rs):
        raise ValueError("r must be non-negative")
    k = order_stat_index(n, c1)

    def stat(x):
        # k-th largest = (n-k+1)-th smallest
        return np.partition(np.abs(x), n - k, axis=1)[:, n - k]

    values = run_trials(_vector_batch(spec, n, stat), trials, seed, threads=threads)
    return _unwrap(count_events(values, rs, rs, master=seed), scalar)


# -- compressible infimum ---------------------------------------------------

MAX_EXHAUSTIVE_COLUMNS = 14


def comp_lower_bound(A: np.ndarray, delta: float, rho: float) -> float:
    """Certified lower bound on inf over Comp(delta, rho) of |Ax|.

    Any x in Comp splits as u + w with u supported on s = ceil(delta n)
    coordinates, |w| <= rho and |u| >= sqrt(1 - rho^2), hence
    |Ax| >= sqrt(1 - rho^2) min_S sigma_min(A_S) - rho sigma_max(A).
    """
    N, n = A.shape
    if n > MAX_EXHAUSTIVE_COLUMNS:
        raise ValueError(f"exhaustive supports limited to n <= {MAX_EXHAUSTIVE_COLUMNS}")
    s = min(n, math.ceil(delta * n - 1e-9))
    supports = np.array(list(itertools.combinations(range(n), s)))
    sub = A[:, supports].transpose(1, 0, 2)
    sigma_s = smallest_singular_values(sub).min()
    sigma_max = np.linalg.svd(A, compute_uv=False)[0]
    return float(math.sqrt(1 - rho * rho) * sigma_s - rho * sigma_max)


def comp_inf_upper_bound(A: np.ndarray, delta: float, rho: float, samples: int, rng: np.random.Generator) -> float:
    """Upper bound on inf over Comp(delta, rho) of |Ax| by direct search.

    Candidates are the exactly sparse minimisers on every support plus random
    compressible perturbations of them; every candidate is checked to lie in
    Comp.
    """
    N, n = A.shape
    k = math.floor(delta * n + 1e-9)
    best = math.inf
    seeds = []
    for S in itertools.combinations(range(n), k):
        S = list(S)
        _, s, vt = np.linalg.svd(A[:, S])
        x = np.zeros(n)
        x[S] = vt[-1]
        best = min(best, float(np.linalg.norm(A @ x)))
        seeds.append(x)
    seeds = np.array(seeds)
    for _ in range(samples):
        x = seeds[rng.integers(len(seeds))].copy()
        w = rng.standard_normal(n)
        w *= rho * rng.random() / np.linalg.norm(w)
        x = x + w
        x /= np.linalg.norm(x)
        if classify_compressible(x, delta, rho) is Compressibility.COMP:
            best = min(best, float(np.linalg.norm(A @ x)))
    return best


def estimate_comp_inf_tail(
    spec: EnsembleSpec,
    N: int,
    n: int,
    delta: float,
    rho: float,
    thresholds,
    trials: int,
    seed: int,
    normalization: str = "sqrt_N",
    threads: int = 1,
):
    """P(L(A) <= t * scale) with L the certified lower bound of
    :func:`comp_lower_bound`.

    L(A) never exceeds the true infimum, so each estimate is an upper bound
    on the probability that the infimum over Comp falls below the threshold.
    """
    ts, scalar = _as_list(thresholds)
    scale = normalization_scale(normalization, N, n)

    def batch(seeds):
        return [comp_lower_bound(draw_matrix(spec, N, n, generator(s)), delta, rho) for s in seeds]

    values = run_trials(batch, trials, seed, threads=threads)
    return _unwrap(
        count_events(values, [t * scale for t in ts], ts, master=seed, normalization=normalization),
        scalar,
    )


# -- distance to the span of the other columns ------------------------------

def _square_spec_check(spec: EnsembleSpec, n: int):
    if n < 2:
        raise ValueError("need n >= 2")
    if spec.kind == "concatenated":
        raise ValueError("distance experiments need a square spec")


def distance_batch(spec: EnsembleSpec, n: int) -> BatchFn:
    def batch(seeds):
        out = np.empty(len(seeds))
        for i, s in enumerate(seeds):
            A = draw_matrix(spec, n, n, generator(s))
            basis = orthonormal_basis(A[:, 1:])
            out[i] = np.nan if basis.dim < n - 1 else np.linalg.norm(basis.residual(A[:, 0]))
        return out

    return batch


def estimate_distance_tail(spec: EnsembleSpec, n: int, epsilon, trials: int = 10_000, seed: int = 0, threads: int = 1):
    """P(dist(A_1, H_1) < epsilon) for square A, H_1 the span of columns 2..n."""
    _square_spec_check(spec, n)
    eps, scalar = _as_list(epsilon)
    values = run_trials(distance_batch(spec, n), trials, seed, threads=threads)
    return _unwrap(count_events(values, eps, eps, master=seed, mode="lt"), scalar)


def estimate_normal_compressible(
    spec: EnsembleSpec, n: int, delta: float, rho: float, trials: int = 10_000, seed: int = 0, threads: int = 1
) -> TailEstimate:
    """P(the unit normal to H_1 lies in Comp(delta, rho))."""
    _square_spec_check(spec, n)
    k = math.floor(delta * n + 1e-9)

    def batch(seeds):
        out = np.empty(len(seeds))
        for i, s in enumerate(seeds):
            A = draw_matrix(spec, n, n, generator(s))
            basis = orthonormal_basis(A[:, 1:])
            if basis.dim < n - 1:
                out[i] = np.nan
                continue
            normal = complement_basis(basis).vectors[:, 0]
            out[i] = dist_to_sparse(normal, k)
        return out

    values = run_trials(batch, trials, seed, threads=threads)
    return count_events(values, [rho], [rho], master=seed)[0]


# -- projected block --------------------------------------------------------

@dataclass(frozen=True)
class ProjectedTail:
    sigma_min: list[TailEstimate]
    fixed_x: list[TailEstimate]
    codimension: int
    codimension_ok: bool
    discarded_degenerate: int


def _check_projected(spec: EnsembleSpec, N: int, n: int, J) -> np.ndarray:
    if spec.kind != "independent_columns":
        raise ValueError("projected block experiments need an independent_columns spec")
    d = N - n + 1
    J = np.arange(d) if J is None else np.asarray(J, dtype=int)
    if d < 1 or J.size != d:
        raise ValueError(f"|J| must equal N - n + 1 = {d}")
    return J


def estimate_projected_sv_tail(
    spec: EnsembleSpec,
    N: int,
    n: int,
    t,
    trials: int,
    seed: int,
    J=None,
    x=None,
    threads: int = 1,
) -> ProjectedTail:
    """Tails of sigma_min(W) and of |W x| at scale t sqrt(2d - 1), where
    W = projected_block(A, J), d = N - n + 1 and x is a fixed unit vector
    (the flat vector by default). ``J`` defaults to the first d columns.
    """
    J = _check_projected(spec, N, n, J)
    d = J.size
    x = np.full(d, 1 / math.sqrt(d)) if x is None else np.asarray(x, dtype=float)
    x = x / np.linalg.norm(x)
    ts, _ = _as_list(t)
    codim = 2 * d - 1

    def batch(seeds):
        out = np.full((len(seeds), 3), np.nan)
        for i, s in enumerate(seeds):
            A = draw_matrix(spec, N, n, generator(s))
            try:
                W = projected_block(A, J)
            except DegenerateSampleError:
                continue
            out[i] = np.linalg.svd(W, compute_uv=False)[-1], np.linalg.norm(W @ x), W.shape[0]
        return out

    values = run_trials(batch, trials, seed, threads=threads)
    cutoffs = [v * math.sqrt(codim) for v in ts]
    sig = count_events(values[:, 0], cutoffs, ts, master=seed, normalization="sigma_min(W)/sqrt(2d-1)")
    fix = count_events(values[:, 1], cutoffs, ts, master=seed, normalization="|Wx|/sqrt(2d-1)")
    dims = values[:, 2][~np.isnan(values[:, 2])]
    return ProjectedTail(sig, fix, codim, bool(np.all(dims == codim)), int(np.isnan(values[:, 2]).sum()))


# -- event cover ------------------------------------------------------------

def cover_band_count(N: int, n: int, d: int, C1: float) -> int:
    """m = ceil(log2(C1 sqrt(Nn) / d)), floored at 0."""
    return max(0, math.ceil(math.log2(C1 * math.sqrt(N * n) / d) - 1e-12))


@dataclass(frozen=True)
class CoverEvents:
    small: bool
    e1: bool
    e2: tuple[bool, ...]
    e3: bool

    @property
    def covered(self) -> bool:
        return (not self.small) or self.e1 or any(self.e2) or self.e3


def cover_events(inf_value: float, hs: float, epsilon: float, N: int, n: int, d: int, C1: float) -> CoverEvents:
    """Indicators of the small-infimum event and of E1, E2_i (i = 0..m), E3."""
    root_d = math.sqrt(d)
    m = cover_band_count(N, n, d, C1)
    small = inf_value <= epsilon * root_d
    e1 = small and hs < C1 * d
    e2 = tuple(
        bool(inf_value <= 2**i * epsilon * root_d and C1 * 2**i * d <= hs < C1 * 2 ** (i + 1) * d)
        for i in range(m + 1)
    )
    e3 = hs >= C1 * math.sqrt(N * n)
    return CoverEvents(bool(small), bool(e1), e2, bool(e3))


@dataclass(frozen=True)
class CoverReport:
    trials: int
    small_events: int
    violations: int
    e1: int
    e2: tuple[int, ...]
    e3: int
    bands: int
    discarded_degenerate: int

    @property
    def ok(self) -> bool:
        return self.violations == 0


def verify_event_cover(
    spec: EnsembleSpec,
    N: int,
    n: int,
    epsilon: float,
    C1: float,
    trials: int,
    seed: int,
    spread: SpreadParams = SpreadParams(),
    spread_samples: int = 64,
    threads: int = 1,
) -> CoverReport:
    """Check, sample by sample, that {inf |Wx| <= eps sqrt(d)} over a sampled
    spread set lies inside E1 u E2_0 u ... u E2_m u E3."""
    J = _check_projected(spec, N, n, None)
    d = J.size
    xs = sample_spread(d, spread_samples, spread, generator(RandomSeed(seed, AUX_STREAM)))
    m = cover_band_count(N, n, d, C1)

    def batch(seeds):
        out = np.full((len(seeds), 2), np.nan)
        for i, s in enumerate(seeds):
            A = draw_matrix(spec, N, n, generator(s))
            try:
                W = projected_block(A, J)
            except DegenerateSampleError:
                continue
            out[i] = np.linalg.norm(xs @ W.T, axis=1).min(), hs_norm(W)
        return out

    values = run_trials(batch, trials, seed, threads=threads)
    valid = values[~np.isnan(values[:, 0])]
    small = violations = e1 = e3 = 0
    e2 = [0] * (m + 1)
    for inf_value, hs in valid:
        ev = cover_events(inf_value, hs, epsilon, N, n, d, C1)
        small += ev.small
        violations += not ev.covered
        e1 += ev.e1
        e3 += ev.e3
        for i, hit in enumerate(ev.e2):
            e2[i] += hit
    return CoverReport(len(valid), small, violations, e1, tuple(e2), e3, m, len(values) - len(valid))


# -- rounding experiments ---------------------------------------------------

def rounding_batch(y: np.ndarray, epsilon: float) -> Callable[[list[RandomSeed]], np.ndarray]:
    """Per-seed lattice indices of the rounding of y, shape (len(seeds), n).

    Row i equals ``random_round(y, epsilon, seeds[i]).lattice_index``.
    """
    n = y.shape[0]
    scaled = y * (math.sqrt(n) / epsilon)
    k = np.floor(scaled)
    p = scaled - k

    def batch(seeds):
        u = np.stack([generator(s).random(n) for s in seeds])
        return k[None, :] + (u < p[None, :])

    return batch


@dataclass(frozen=True)
class MomentReport:
    trials: int
    mean: float
    stderr: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.mean <= self.bound + 3 * self.stderr


def verify_rounding_moment(A, y, epsilon: float, trials: int, seed: int, threads: int = 1) -> MomentReport:
    """Compare the empirical mean of |A(y - eta_y)|^2 with (eps^2/n) |A|_HS^2."""
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    spacing = epsilon / math.sqrt(n)
    index = run_trials(rounding_batch(y, epsilon), trials, seed, threads=threads)
    err = (y[None, :] - index * spacing) @ A.T
    sq = np.sum(err * err, axis=1)
    stderr = float(sq.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.inf
    return MomentReport(trials, float(sq.mean()), stderr, epsilon**2 / n * hs_norm(A) ** 2)


@dataclass(frozen=True)
class SparsityReport:
    m: int
    sparse: TailEstimate
    in_net: TailEstimate
    floor: float = 0.70

    @property
    def ok(self) -> bool:
        return self.sparse.p_hat >= self.floor


def verify_sparsity_prob(y, delta: float, rho: float, epsilon: float, trials: int, seed: int, threads: int = 1) -> SparsityReport:
    """Frequency with which the rounding of a compressible unit y lands in
    Sparse(m), and in the full lattice net."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if classify_compressible(y, delta, rho) is not Compressibility.COMP:
        raise ValueError("verify_sparsity_prob needs a compressible unit vector")
    m = DecompositionParams(delta, rho, epsilon, n).m
    index = run_trials(rounding_batch(y, epsilon), trials, seed, threads=threads)
    nnz = np.count_nonzero(index, axis=1)
    norms = np.linalg.norm(index, axis=1) * (epsilon / math.sqrt(n))
    sparse = TailEstimate(trials, int(np.count_nonzero(nnz <= m)), float(m), "support<=m", seed)
    net = TailEstimate(trials, int(np.count_nonzero((nnz <= m) & (norms <= 1 + epsilon))), float(m), "in_net", seed)
    return SparsityReport(m, sparse, net)


# -- configuration ----------------------------------------------------------

EXPERIMENT_KINDS = (
    "sv_tail",
    "smallball",
    "paouris",
    "comp_inf_tail",
    "distance_tail",
    "order_stat",
    "projected_sv_tail",
    "event_cover",
    "normal_incompressibility",
    "rounding_moment",
    "sparsity_prob",
)


class ConfigError(ValueError):
    pass


RESERVED_SECTION = "defaults"


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment block. Only the fields its ``kind`` reads matter."""

    name: str
    kind: str
    ensemble: EnsembleSpec
    N: int
    n: int
    trials: int
    seed: int
    thresholds: tuple[float, ...] = ()
    normalization: str = "absolute"
    delta: float = 0.5
    rho: float = 0.05
    epsilon: float = 0.5
    c1: float = 0.1
    paouris_C: float = 3.0
    C1: float = 1.0
    c_lo: float = 0.1
    c_hi: float = 10.0
    min_events: int = 0
    max_trials: int = 0
    threads: int = 1

    def __post_init__(self):
        if not self.name.strip() or self.name != self.name.strip() or any(c in self.name for c in "[]\n\r"):
            raise ConfigError(f"invalid experiment name {self.name!r}")
        if self.name == RESERVED_SECTION:
            raise ConfigError(f"experiment name {RESERVED_SECTION!r} is reserved for shared defaults")
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ConfigError("trials must be a positive integer")
        if self.N < 1 or self.n < 1:
            raise ConfigError("N and n must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ConfigError("thresholds must be strictly increasing")
        if self.kind in ("sv_tail", "comp_inf_tail", "projected_sv_tail", "event_cover") and self.N < self.n:
            raise ConfigError("singular value experiments need N >= n")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"unknown normalization {self.normalization!r}")
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        needs = ("sv_tail", "smallball", "paouris", "comp_inf_tail", "distance_tail", "order_stat", "projected_sv_tail")
        if self.kind in needs and not self.thresholds:
            raise ConfigError(f"{self.kind} needs at least one threshold")

    _SCALARS = {
        "N": int, "n": int, "trials": int, "seed": int, "normalization": str,
        "delta": float, "rho": float, "epsilon": float, "c1": float,
        "paouris_C": float, "C1": float, "c_lo": float, "c_hi": float,
        "min_events": int, "max_trials": int, "threads": int,
    }

    def to_mapping(self) -> dict[str, str]:
        out = {"kind": self.kind}
        out.update(self.ensemble.to_mapping())
        for f in fields(self):
            if f.name in self._SCALARS:
                value = getattr(self, f.name)
                out[f.name] = repr(value) if isinstance(value, float) else str(value)
        out["thresholds"] = ", ".join(repr(t) for t in self.thresholds)
        return out

    @classmethod
    def from_mapping(cls, name: str, mapping: Mapping[str, str]) -> "ExperimentConfig":
        known = set(cls._SCALARS) | {"kind", "thresholds"}
        for key in mapping:
            if key not in known and not key.startswith("ensemble."):
                raise ConfigError(f"[{name}] unknown key {key!r}")
        kwargs = {}
        try:
            for key, conv in cls._SCALARS.items():
                if key in mapping:
                    kwargs[key] = conv(mapping[key].strip())
            raw = mapping.get("thresholds", "").strip()
            kwargs["thresholds"] = tuple(float(v) for v in raw.split(",")) if raw else ()
            ensemble = EnsembleSpec.from_mapping(mapping)
            kind = mapping["kind"].strip()
        except KeyError as exc:
            raise ConfigError(f"[{name}] missing key {exc.args[0]!r}") from None
        except ValueError as exc:
            raise ConfigError(f"[{name}] {exc}") from None
        for key in ("N", "n", "trials", "seed"):
            if key not in kwargs:
                raise ConfigError(f"[{name}] missing key {key!r}")
        return cls(name=name, kind=kind, ensemble=ensemble, **kwargs)


@dataclass
class ExperimentResult:
    estimates: list[TailEstimate]
    extra: dict = field(default_factory=dict)


def _aux_rng(cfg: ExperimentConfig, offset: int) -> np.random.Generator:
    return generator(RandomSeed(cfg.seed, AUX_STREAM - offset))


def _random_compressible(n: int, delta: float, rho: float, rng: np.random.Generator) -> np.ndarray:
    k = math.floor(delta * n + 1e-9)
    perm = rng.permutation(n)
    head = rng.standard_normal(k)
    tail = rng.standard_normal(n - k)
    tau = rho * rng.random()
    y = np.zeros(n)
    y[perm[:k]] = math.sqrt(1 - tau * tau) * head / np.linalg.norm(head)
    if n > k:
        y[perm[k:]] = tau * tail / np.linalg.norm(tail)
    return y / np.linalg.norm(y)


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> ExperimentResult:
    """Dispatch one configured experiment."""
    th = threads or cfg.threads
    spec, N, n, ts = cfg.ensemble, cfg.N, cfg.n, list(cfg.thresholds)
    if cfg.kind == "sv_tail":
        est = estimate_sv_tail(
            spec, N, n, ts, cfg.trials, cfg.seed, cfg.normalization, th,
            min_events=cfg.min_events, max_trials=cfg.max_trials or None,
        )
        return ExperimentResult(est)
    if cfg.kind == "smallball":
        return ExperimentResult(estimate_smallball(spec, n, ts, None, cfg.trials, cfg.seed, th))
    if cfg.kind == "paouris":
        return ExperimentResult(estimate_paouris(spec, n, ts, cfg.trials, cfg.seed, cfg.paouris_C, th))
    if cfg.kind == "comp_inf_tail":
        est = estimate_comp_inf_tail(spec, N, n, cfg.delta, cfg.rho, ts, cfg.trials, cfg.seed, cfg.normalization, th)
        return ExperimentResult(est)
    if cfg.kind == "distance_tail":
        return ExperimentResult(estimate_distance_tail(spec, n, ts, cfg.trials, cfg.seed, th))
    if cfg.kind == "order_stat":
        return ExperimentResult(estimate_order_stat(spec, n, cfg.c1, ts, cfg.trials, cfg.seed, th))
    if cfg.kind == "projected_sv_tail":
        res = estimate_projected_sv_tail(spec, N, n, ts, cfg.trials, cfg.seed, threads=th)
        return ExperimentResult(
            res.sigma_min + res.fixed_x,
            {"codimension": res.codimension, "codimension_ok": res.codimension_ok},
        )
    if cfg.kind == "event_cover":
        rep = verify_event_cover(
            spec, N, n, cfg.epsilon, cfg.C1, cfg.trials, cfg.seed,
            SpreadParams(cfg.c_lo, cfg.c_hi), threads=th,
        )
        est = TailEstimate(rep.trials, rep.small_events, cfg.epsilon, "inf|Wx|/sqrt(d)", cfg.seed, rep.discarded_degenerate)
        extra = {"violations": rep.violations, "e1": rep.e1, "e2": list(rep.e2), "e3": rep.e3, "bands": rep.bands}
        return ExperimentResult([est], extra)
    if cfg.kind == "normal_incompressibility":
        est = estimate_normal_compressible(spec, n, cfg.delta, cfg.rho, cfg.trials, cfg.seed, th)
        return ExperimentResult([est])
    if cfg.kind == "rounding_moment":
        A = draw_matrix(spec, N, n, _aux_rng(cfg, 0))
        y = _aux_rng(cfg, 1).standard_normal(n)
        y /= np.linalg.norm(y)
        rep = verify_rounding_moment(A, y, cfg.epsilon, cfg.trials, cfg.seed, th)
        return ExperimentResult([], {"mean": rep.mean, "stderr": rep.stderr, "bound": rep.bound, "ok": rep.ok})
    # sparsity_prob
    y = _random_compressible(n, cfg.delta, cfg.rho, _aux_rng(cfg, 1))
    rep = verify_sparsity_prob(y, cfg.delta, cfg.rho, cfg.epsilon, cfg.trials, cfg.seed, th)
    return ExperimentResult([rep.sparse, rep.in_net], {"m": rep.m, "ok": rep.ok})
