"""Sparse / compressible classification, random rounding onto the scaled
integer lattice, sparse lattice nets and spread-vector certificates."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .ensembles import RandomSeed, generator
from .linalg import hs_norm

__all__ = [
    "DecompositionParams",
    "Compressibility",
    "RoundingOutcome",
    "SpreadParams",
    "NetBound",
    "dist_to_sparse",
    "classify_compressible",
    "random_round",
    "round_with",
    "rounding_approximation",
    "RoundingExhausted",
    "sparse_net_contains",
    "enumerate_sparse_net",
    "sparse_net_size_bound",
    "spread_witness",
    "is_spread",
    "sample_spread",
    "MAX_ENUMERATION_DIM",
]

LATTICE_TOL = 1e-12
UNIT_TOL = 1e-10
MAX_ENUMERATION_DIM = 8


def _floor(x: float) -> int:
    # delta*n style products land a few ulps off integers (0.29*100)
    return math.floor(x + 1e-9)


def _ceil(x: float) -> int:
    return math.ceil(x - 1e-9)


@dataclass(frozen=True)
class DecompositionParams:
    delta: float
    rho: float
    epsilon: float
    n: int

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if not 0 < self.epsilon <= 0.5:
            raise ValueError(f"epsilon must lie in (0, 1/2], got {self.epsilon}")
        if self.n < 1:
            raise ValueError("n must be positive")

    @classmethod
    def comp_regime(cls, delta: float, epsilon: float, n: int) -> "DecompositionParams":
        """Parameters with rho = (1 - delta) * epsilon / 5."""
        return cls(delta, (1 - delta) * epsilon / 5, epsilon, n)

    @property
    def sparse_size(self) -> int:
        """floor(delta*n), the support size defining Sparse(delta, n)."""
        return _floor(self.delta * self.n)

    @property
    def m_unclamped(self) -> int:
        n, d, r, e = self.n, self.delta, self.rho, self.epsilon
        return _ceil(d * n) + _ceil(n * r * r / (e * e) + 4 * n * r / e)

    @property
    def m(self) -> int:
        return min(self.m_unclamped, self.n)


def dist_to_sparse(x, k: int) -> float:
    """Distance from ``x`` to vectors with at most ``k`` non-zero entries."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if not 0 <= k <= n:
        raise ValueError(f"k must lie in [0, {n}], got {k}")
    if k == n:
        return 0.0
    tail = np.partition(np.abs(x), n - k - 1)[: n - k]
    return float(np.sqrt(np.sum(tail * tail)))


class Compressibility(enum.Enum):
    COMP = "Comp"
    INCOMP = "Incomp"


def _check_unit(x: np.ndarray) -> None:
    if abs(np.linalg.norm(x) - 1.0) > UNIT_TOL:
        raise ValueError("expected a unit vector")


def classify_compressible(x, delta: float, rho: float) -> Compressibility:
    x = np.asarray(x, dtype=float)
    _check_unit(x)
    k = _floor(delta * x.shape[0])
    if dist_to_sparse(x, k) <= rho:
        return Compressibility.COMP
    return Compressibility.INCOMP


@dataclass(frozen=True)
class RoundingOutcome:
    """One realisation of the random rounding of y.

    ``lattice_index`` holds the integer coordinates of ``eta`` in units of
    ``spacing`` = epsilon / sqrt(n).
    """

    eta: np.ndarray
    lattice_index: np.ndarray
    fractional_parts: np.ndarray
    spacing: float
    attempts: int = 1

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.lattice_index))


def round_with(y, epsilon: float, rng: np.random.Generator) -> RoundingOutcome:
    """Random rounding of ``y`` drawing from an open generator."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    scaled = y * (math.sqrt(n) / epsilon)
    k = np.floor(scaled)
    p = scaled - k
    # coordinates already on the lattice (up to float noise) stay put
    near = np.rint(scaled)
    snap = np.abs(scaled - near) <= LATTICE_TOL * np.maximum(1.0, np.abs(near))
    k[snap] = near[snap]
    p[snap] = 0.0
    up = rng.random(n) < p
    index = k.astype(np.int64) + up
    spacing = epsilon / math.sqrt(n)
    return RoundingOutcome(index * spacing, index, p, spacing)


def random_round(y, epsilon: float, seed: RandomSeed) -> RoundingOutcome:
    """Unbiased per-coordinate rounding of ``y`` to (epsilon/sqrt(n)) Z^n.

    Coordinate i moves to the upper lattice neighbour with probability equal
    to its fractional part, so E[eta] = y and |eta - y|_inf <= epsilon/sqrt(n).
    """
    return round_with(y, epsilon, generator(seed))


class RoundingExhausted(RuntimeError):
    pass


def rounding_approximation(x, A, epsilon: float, seed: RandomSeed, max_attempts: int = 64) -> RoundingOutcome:
    """First rounding of ``x`` with |A(x - eta)| <= (2 eps/sqrt(n)) |A|_HS.

    Each attempt fails with probability below 1/2 by Markov's inequality on
    the second moment, so the expected attempt count is under 2.
    """
    if not 0 < epsilon < 0.05:
        raise ValueError(f"epsilon must lie in (0, 0.05), got {epsilon}")
    if max_attempts < 1:
        raise ValueError("max_attempts must be at least 1")
    x = np.asarray(x, dtype=float)
    A = np.asarray(A, dtype=float)
    n = x.shape[0]
    bound = 2 * epsilon / math.sqrt(n) * hs_norm(A)
    rng = generator(seed)
    for attempt in range(1, max_attempts + 1):
        out = round_with(x, epsilon, rng)
        if np.linalg.norm(A @ (x - out.eta)) <= bound:
            return RoundingOutcome(out.eta, out.lattice_index, out.fractional_parts, out.spacing, attempt)
    raise RoundingExhausted(f"no admissible rounding in {max_attempts} attempts")


def sparse_net_contains(z, epsilon: float, m: int) -> bool:
    """Membership in the lattice net: (eps/sqrt(n)) Z^n, at most m non-zeros,
    Euclidean norm at most 1 + eps."""
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    if epsilon <= 0 or not 0 <= m <= n:
        raise ValueError("need epsilon > 0 and 0 <= m <= n")
    ratio = z * (math.sqrt(n) / epsilon)
    index = np.rint(ratio)
    # float error in the ratio grows with its size (about 1e4 for tiny eps)
    if np.any(np.abs(ratio - index) > LATTICE_TOL * np.maximum(1.0, np.abs(index))):
        return False
    if np.count_nonzero(index) > m:
        return False
    # norm measured on the integer coordinates so boundary points are kept
    radius = (1 + epsilon) * math.sqrt(n) / epsilon
    return bool(np.sum(index * index) <= radius * radius + LATTICE_TOL)


def enumerate_sparse_net(n: int, epsilon: float, m: int) -> np.ndarray:
    """Every point of the lattice net, as integer lattice coordinates.

    Returns an int array of shape (count, n); multiply by epsilon/sqrt(n) for
    the points themselves. Exponential in n, so limited to small dimensions.
    """
    if n > MAX_ENUMERATION_DIM:
        raise ValueError(f"enumeration is limited to n <= {MAX_ENUMERATION_DIM}")
    if epsilon <= 0 or not 0 <= m <= n:
        raise ValueError("need epsilon > 0 and 0 <= m <= n")
    radius = (1 + epsilon) * math.sqrt(n) / epsilon
    kmax = math.floor(radius + LATTICE_TOL)
    limit = radius * radius + LATTICE_TOL
    values = np.arange(-kmax, kmax + 1)
    points = np.zeros((1, 0), dtype=np.int64)
    sumsq = np.zeros(1)
    nnz = np.zeros(1, dtype=np.int64)
    for _ in range(n):
        new_sumsq = (sumsq[:, None] + values[None, :] ** 2).ravel()
        new_nnz = (nnz[:, None] + (values[None, :] != 0)).ravel()
        keep = (new_sumsq <= limit) & (new_nnz <= m)
        rows = np.repeat(np.arange(points.shape[0]), values.size)[keep]
        cols = np.tile(values, points.shape[0])[keep]
        points = np.column_stack([points[rows], cols])
        sumsq, nnz = new_sumsq[keep], new_nnz[keep]
    return points


@dataclass(frozen=True)
class NetBound:
    m: int
    log_value: float

    @property
    def value(self) -> float:
        return math.exp(self.log_value) if self.log_value < 709.0 else math.inf


def sparse_net_size_bound(n: int, delta: float, rho: float, epsilon: float, C_net: float) -> NetBound:
    """Cardinality bound (C_net / (delta^{3/2} eps))^m for the sparse lattice net."""
    if C_net <= 0:
        raise ValueError("C_net must be positive")
    m = DecompositionParams(delta, rho, epsilon, n).m
    log_base = math.log(C_net) - 1.5 * math.log(delta) - math.log(epsilon)
    return NetBound(m, m * log_base)


def spread_witness(x, delta: float, rho: float) -> np.ndarray | None:
    """Indices with rho/sqrt(2n) <= |x_i| <= 1/sqrt(delta n) for incompressible x.

    Returns None when fewer than rho^2 delta n / 2 indices qualify, which an
    incompressible input should never produce.
    """
    x = np.asarray(x, dtype=float)
    if classify_compressible(x, delta, rho) is Compressibility.COMP:
        raise ValueError("spread_witness needs an incompressible vector")
    n = x.shape[0]
    a = np.abs(x)
    J = np.flatnonzero((a >= rho / math.sqrt(2 * n)) & (a <= 1 / math.sqrt(delta * n)))
    if J.size < rho * rho * delta * n / 2:
        return None
    return J


@dataclass(frozen=True)
class SpreadParams:
    c_lo: float = 0.1
    c_hi: float = 10.0
    d: int | None = field(default=None)

    def __post_init__(self):
        if not 0 < self.c_lo <= self.c_hi:
            raise ValueError("need 0 < c_lo <= c_hi")


def is_spread(v, params: SpreadParams = SpreadParams()) -> bool:
    v = np.asarray(v, dtype=float)
    d = v.shape[0]
    if params.d is not None and params.d != d:
        raise ValueError(f"vector has dimension {d}, params expect {params.d}")
    a = np.abs(v)
    return bool(np.all((a >= params.c_lo / math.sqrt(d)) & (a <= params.c_hi / math.sqrt(d))))


def sample_spread(d: int, count: int, params: SpreadParams, rng: np.random.Generator) -> np.ndarray:
    """``count`` spread unit vectors in R^d, shape (count, d), by rejection
    from the uniform law on the sphere."""
    out = []
    have = 0
    for _ in range(10_000):
        g = rng.standard_normal((max(count, 16), d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        a = np.abs(g) * math.sqrt(d)
        ok = np.all((a >= params.c_lo) & (a <= params.c_hi), axis=1)
        out.append(g[ok])
        have += int(ok.sum())
        if have >= count:
            return np.concatenate(out)[:count]
    raise RuntimeError("spread parameters reject almost every sphere point")
