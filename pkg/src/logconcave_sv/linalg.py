"""Dense linear-algebra primitives: singular values, Hilbert-Schmidt norm,
distances to column spans and the projected block of selected columns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "RANK_TOL",
    "DegenerateSampleError",
    "SubspaceBasis",
    "singular_values",
    "smallest_singular_values",
    "hs_norm",
    "orthonormal_basis",
    "complement_basis",
    "distance_to_colspan",
    "projected_block",
]

RANK_TOL = 1e-10


class DegenerateSampleError(ValueError):
    """A measure-zero sample: the conditioning column span lost rank."""


def _finite_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or min(A.shape) < 1:
        raise ValueError(f"expected a non-empty 2-d matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def singular_values(A) -> np.ndarray:
    """Singular values in descending order, length min(N, n)."""
    return np.linalg.svd(_finite_matrix(A), compute_uv=False)


def smallest_singular_values(stack: np.ndarray) -> np.ndarray:
    """sigma_min of every matrix in a (batch, N, n) stack."""
    return np.linalg.svd(stack, compute_uv=False)[..., -1]


def hs_norm(A) -> float:
    A = _finite_matrix(A)
    return float(np.sqrt(np.sum(A * A)))


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal basis stored as the columns of ``vectors`` (N x r)."""

    ambient: int
    vectors: np.ndarray
    tol: float = RANK_TOL

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def project(self, v: np.ndarray) -> np.ndarray:
        Q = self.vectors
        return Q @ (Q.T @ v)

    def residual(self, v: np.ndarray) -> np.ndarray:
        """v minus its projection, reorthogonalised once more."""
        r = v - self.project(v)
        return r - self.project(r)


def orthonormal_basis(B, tol: float = RANK_TOL) -> SubspaceBasis:
    """Orthonormal basis of colspan(B), dropping numerically dependent columns.

    Column-pivoted Householder QR; a column counts towards the rank while its
    pivot exceeds ``tol`` times the largest column norm.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2:
        raise ValueError("B must be 2-d")
    N, k = B.shape
    if k == 0:
        return SubspaceBasis(N, np.zeros((N, 0)), tol)
    if not np.all(np.isfinite(B)):
        raise ValueError("matrix has non-finite entries")
    scale = np.linalg.norm(B, axis=0).max()
    if scale == 0.0:
        return SubspaceBasis(N, np.zeros((N, 0)), tol)
    Q, R, _ = scipy.linalg.qr(B, mode="economic", pivoting=True)
    rank = int(np.count_nonzero(np.abs(np.diag(R)) > tol * scale))
    return SubspaceBasis(N, Q[:, :rank], tol)


def complement_basis(basis: SubspaceBasis) -> SubspaceBasis:
    """Orthonormal basis of the orthogonal complement of ``basis``."""
    N, r = basis.ambient, basis.dim
    if r == 0:
        return SubspaceBasis(N, np.eye(N), basis.tol)
    Qfull, _ = np.linalg.qr(basis.vectors, mode="complete")
    C = Qfull[:, r:]
    C = C - basis.project(C)
    C, _ = np.linalg.qr(C)
    return SubspaceBasis(N, C, basis.tol)


def distance_to_colspan(v, B) -> float:
    """Euclidean distance from ``v`` to the column span of ``B`` (N x k, k < N)."""
    v = np.asarray(v, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if v.ndim != 1 or B.shape[0] != v.shape[0]:
        raise ValueError(f"dimension mismatch: v has shape {v.shape}, B has shape {B.shape}")
    if B.shape[1] >= B.shape[0]:
        raise ValueError("distance_to_colspan needs fewer columns than rows")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return float(np.linalg.norm(orthonormal_basis(B).residual(v)))


def projected_block(A, J) -> np.ndarray:
    """Coordinates of P A_J, with P the orthogonal projection onto the
    complement of the span of the other columns.

    ``J`` holds 0-based column indices. The result has N - (n - |J|) rows and
    satisfies ``|W x| == dist(A_J x, span(A_{J^c}))`` for every x.
    Raises :class:`DegenerateSampleError` when the columns outside ``J`` are
    linearly dependent.
    """
    A = _finite_matrix(A)
    N, n = A.shape
    J = np.asarray(J, dtype=int).ravel()
    if J.size == 0 or len(set(J.tolist())) != J.size or J.min() < 0 or J.max() >= n:
        raise ValueError(f"J must be distinct column indices in [0, {n})")
    rest = np.setdiff1d(np.arange(n), J)
    if rest.size >= N:
        raise ValueError("complement columns must number fewer than rows")
    basis = orthonormal_basis(A[:, rest])
    if basis.dim < rest.size:
        raise DegenerateSampleError(
            f"columns outside J span dimension {basis.dim} < {rest.size}"
        )
    perp = complement_basis(basis)
    return perp.vectors.T @ A[:, J]
