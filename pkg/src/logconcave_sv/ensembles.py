"""Isotropic log-concave vector and matrix ensembles.

Every sampler is a pure function of ``(spec, dims, seed)``. Randomness comes
from numpy's Philox bit generator keyed directly by ``(master, stream)``, so
any trial can be reproduced in isolation and trials can run in any order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

__all__ = [
    "RandomSeed",
    "EnsembleSpec",
    "VECTOR_KINDS",
    "gaussian",
    "uniform_cube",
    "laplace",
    "ell1_ball",
    "independent_columns",
    "make_concatenated",
    "ell1_radius",
    "generator",
    "sample_vector",
    "sample_vectors",
    "sample_matrix",
    "draw_matrix",
    "isotropy_report",
    "isotropy_of",
    "IsotropyReport",
]

_U64 = 2**64

VECTOR_KINDS = ("gaussian", "uniform_cube", "laplace", "ell1_ball")
MATRIX_KINDS = ("independent_columns", "concatenated")


@dataclass(frozen=True)
class RandomSeed:
    """Key for one reproducible random stream: ``master`` picks the run,
    ``stream`` the trial."""

    master: int
    stream: int = 0

    def __post_init__(self):
        for name in ("master", "stream"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or not 0 <= value < _U64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {value!r}")

    def child(self, stream: int) -> "RandomSeed":
        return RandomSeed(self.master, stream)


def generator(seed: RandomSeed) -> np.random.Generator:
    key = np.array([seed.master, seed.stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class EnsembleSpec:
    """Declarative description of an isotropic log-concave law.

    Vector kinds (``gaussian``, ``uniform_cube``, ``laplace``, ``ell1_ball``)
    define a law in any dimension; used as a matrix law they describe the
    N*n entries jointly. ``independent_columns`` draws each column from
    ``column``; ``concatenated`` places ``copies`` independent draws of
    ``base`` side by side.
    """

    kind: str
    column: "EnsembleSpec | None" = None
    base: "EnsembleSpec | None" = None
    copies: int | None = None

    def __post_init__(self):
        if self.kind in VECTOR_KINDS:
            if self.column is not None or self.base is not None or self.copies is not None:
                raise ValueError(f"{self.kind} takes no nested spec")
        elif self.kind == "independent_columns":
            if self.column is None or not self.column.is_vector_kind:
                raise ValueError("independent_columns needs a vector-kind column spec")
        elif self.kind == "concatenated":
            if self.base is None or self.copies is None or self.copies < 1:
                raise ValueError("concatenated needs a base spec and copies >= 1")
        else:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")

    @property
    def is_vector_kind(self) -> bool:
        return self.kind in VECTOR_KINDS

    @property
    def unconditional(self) -> bool:
        if self.kind == "independent_columns":
            return self.column.unconditional
        if self.kind == "concatenated":
            return self.base.unconditional
        return True

    def scale(self, dim: int) -> float:
        """Multiplier that makes the base law of this kind isotropic in ``dim``."""
        if self.kind == "gaussian":
            return 1.0
        if self.kind == "uniform_cube":
            return math.sqrt(3.0)
        if self.kind == "laplace":
            return 1.0 / math.sqrt(2.0)
        if self.kind == "ell1_ball":
            return ell1_radius(dim)
        raise ValueError(f"{self.kind} has no scalar scaling constant")

    def to_mapping(self, prefix: str = "ensemble") -> dict[str, str]:
        out = {f"{prefix}.kind": self.kind}
        if self.kind == "independent_columns":
            out.update(self.column.to_mapping(f"{prefix}.column"))
        elif self.kind == "concatenated":
            out.update(self.base.to_mapping(f"{prefix}.base"))
            out[f"{prefix}.copies"] = str(self.copies)
        return out

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str], prefix: str = "ensemble") -> "EnsembleSpec":
        try:
            kind = mapping[f"{prefix}.kind"].strip()
        except KeyError:
            raise ValueError(f"missing key {prefix}.kind") from None
        if kind == "independent_columns":
            return cls(kind, column=cls.from_mapping(mapping, f"{prefix}.column"))
        if kind == "concatenated":
            try:
                copies = int(mapping[f"{prefix}.copies"])
            except KeyError:
                raise ValueError(f"missing key {prefix}.copies") from None
            return cls(kind, base=cls.from_mapping(mapping, f"{prefix}.base"), copies=copies)
        return cls(kind)


def gaussian() -> EnsembleSpec:
    return EnsembleSpec("gaussian")


def uniform_cube() -> EnsembleSpec:
    return EnsembleSpec("uniform_cube")


def laplace() -> EnsembleSpec:
    return EnsembleSpec("laplace")


def ell1_ball() -> EnsembleSpec:
    return EnsembleSpec("ell1_ball")


def independent_columns(column: EnsembleSpec) -> EnsembleSpec:
    return EnsembleSpec("independent_columns", column=column)


def make_concatenated(spec: EnsembleSpec, N: int, n: int) -> EnsembleSpec:
    """Spec for ``floor(N/n)`` independent N x n copies of ``spec`` side by side.

    Only defined for ``N >= 2n``; the first n columns keep the law of ``spec``.
    """
    _check_positive(N=N, n=n)
    if N < 2 * n:
        raise ValueError(f"concatenation needs N >= 2n, got N={N}, n={n}")
    return EnsembleSpec("concatenated", base=spec, copies=N // n)


def ell1_radius(d: int) -> float:
    """Radius r with uniform measure on r*B_1^d isotropic.

    A coordinate of the uniform law on B_1^d has second moment
    2/((d+1)(d+2)).
    """
    return math.sqrt((d + 1) * (d + 2) / 2.0)


def _check_positive(**dims):
    for name, value in dims.items():
        if not isinstance(value, (int, np.integer)) or value < 1:
            raise ValueError(f"{name} must be a positive integer, got {value!r}")


def _draw(kind: str, dim: int, rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` independent draws of a vector kind in dimension ``dim``."""
    shape = (count, dim)
    if kind == "gaussian":
        return rng.standard_normal(shape)
    if kind == "uniform_cube":
        a = math.sqrt(3.0)
        return rng.uniform(-a, a, size=shape)
    if kind == "laplace":
        return rng.laplace(0.0, 1.0 / math.sqrt(2.0), size=shape)
    if kind == "ell1_ball":
        # exponential spacings normalised by their sum are uniform on the
        # simplex; random signs give the l1 sphere, U^(1/d) fills the ball
        e = rng.standard_exponential(shape)
        signs = rng.integers(0, 2, size=shape) * 2 - 1
        radius = rng.random(count) ** (1.0 / dim)
        direction = signs * e / e.sum(axis=1, keepdims=True)
        return direction * (radius * ell1_radius(dim))[:, None]
    raise ValueError(f"{kind} is not a vector kind")


def sample_vectors(spec: EnsembleSpec, n: int, rng: np.random.Generator, count: int) -> np.ndarray:
    """Batch of ``count`` i.i.d. draws, shape (count, n), from an open generator."""
    _check_positive(n=n, count=count)
    if not spec.is_vector_kind:
        raise ValueError(f"{spec.kind} is a matrix-only kind")
    return _draw(spec.kind, n, rng, count)


def sample_vector(spec: EnsembleSpec, n: int, seed: RandomSeed) -> np.ndarray:
    return sample_vectors(spec, n, generator(seed), 1)[0]


def draw_matrix(spec: EnsembleSpec, N: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """One matrix draw from an open generator (see :func:`sample_matrix`)."""
    _check_positive(N=N, n=n)
    if spec.is_vector_kind:
        return _draw(spec.kind, N * n, rng, 1).reshape(N, n)
    if spec.kind == "independent_columns":
        return _draw(spec.column.kind, N, rng, n).T.copy()
    blocks = [draw_matrix(spec.base, N, n, rng) for _ in range(spec.copies)]
    return np.hstack(blocks)


def sample_matrix(spec: EnsembleSpec, N: int, n: int, seed: RandomSeed) -> np.ndarray:
    """One N x n draw (N x n*copies for concatenated specs), deterministic in ``seed``."""
    return draw_matrix(spec, N, n, generator(seed))


@dataclass(frozen=True)
class IsotropyReport:
    trials: int
    max_cov_deviation: float
    max_abs_mean: float

    def passes(self, tol: float = 0.05) -> bool:
        return self.max_cov_deviation < tol and self.max_abs_mean < tol


def isotropy_of(samples: np.ndarray) -> IsotropyReport:
    """Isotropy summary of a (trials, dim) sample array."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need a (trials, dim) array with trials >= 2")
    mean = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    dev = np.abs(cov - np.eye(x.shape[1])).max()
    return IsotropyReport(x.shape[0], float(dev), float(np.abs(mean).max()))


def isotropy_report(
    spec: EnsembleSpec,
    n: int,
    trials: int,
    seed: RandomSeed,
    coords=None,
) -> IsotropyReport:
    """Max deviation of the empirical covariance from the identity, and of the
    mean from zero, over ``trials`` draws in dimension ``n``.

    ``independent_columns`` is checked through its column law; ``coords``
    restricts the report to a coordinate marginal.
    """
    if trials < 2:
        raise ValueError("isotropy_report needs trials >= 2")
    if spec.kind == "concatenated":
        raise ValueError("report concatenated specs through isotropy_of on sampled blocks")
    law = spec.column if spec.kind == "independent_columns" else spec
    x = sample_vectors(law, n, generator(seed), trials)
    if coords is not None:
        x = x[:, np.asarray(coords)]
    return isotropy_of(x)
