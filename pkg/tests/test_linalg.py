import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from logconcave_sv.acceptance import charpoly_singular_values
from logconcave_sv.linalg import (
    DegenerateSampleError,
    complement_basis,
    distance_to_colspan,
    hs_norm,
    orthonormal_basis,
    projected_block,
    singular_values,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def matrices(rows=st.integers(1, 8), cols=st.integers(1, 8)):
    return st.tuples(rows, cols).flatmap(lambda s: arrays(float, s, elements=finite))


def test_identity_and_diagonal():
    assert np.allclose(singular_values(np.eye(3)), [1, 1, 1])
    A = np.vstack([np.diag([3.0, 2.0, 1.0]), np.zeros((2, 3))])
    assert np.allclose(singular_values(A), [3, 2, 1])


def test_charpoly_oracle():
    rng = np.random.default_rng(20)
    for _ in range(50):
        A = rng.uniform(-1, 1, (3, 3))
        assert np.allclose(singular_values(A), charpoly_singular_values(A), rtol=1e-8, atol=0)


def test_nonfinite_rejected():
    with pytest.raises(ValueError):
        singular_values(np.array([[np.nan, 1.0]]))
    with pytest.raises(ValueError):
        hs_norm(np.array([[np.inf]]))


def test_hs_norm_examples():
    assert hs_norm(np.eye(7)) == pytest.approx(np.sqrt(7))
    assert hs_norm(np.ones((2, 3))) == pytest.approx(np.sqrt(6))
    A = np.random.default_rng(21).standard_normal((4, 4))
    assert hs_norm(A) == pytest.approx(np.sqrt(np.sum(singular_values(A) ** 2)), rel=1e-8)


@given(matrices())
@settings(max_examples=100, deadline=None)
def test_hs_norm_matches_singular_values(A):
    s = singular_values(A)
    assert hs_norm(A) ** 2 == pytest.approx(np.sum(s**2), rel=1e-8, abs=1e-12)
    assert np.all(np.diff(s) <= 1e-12) and s.size == min(A.shape)


@given(st.integers(1, 6), st.integers(0, 5), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_sigma_min_variational(n, extra, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n + extra, n))
    x = rng.standard_normal((200, n))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    assert np.all(np.linalg.norm(x @ A.T, axis=1) >= singular_values(A)[-1] - 1e-8)


@given(st.integers(1, 6), st.integers(0, 5), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_orthogonal_invariance(n, extra, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n + extra, n))
    Q = stats.ortho_group.rvs(n + extra, random_state=rng) if n + extra > 1 else np.array([[-1.0]])
    assert np.allclose(singular_values(Q @ A), singular_values(A), atol=1e-8)


def test_distance_examples():
    assert distance_to_colspan(np.array([0.0, 1.0]), np.array([[1.0], [0.0]])) == pytest.approx(1.0)
    B = np.random.default_rng(22).standard_normal((5, 2))
    assert distance_to_colspan(3 * B[:, 0], B) == pytest.approx(0.0, abs=1e-12)


def test_distance_normal_equations_oracle():
    rng = np.random.default_rng(23)
    for _ in range(100):
        B = rng.standard_normal((6, 3))
        v = rng.standard_normal(6)
        z = np.linalg.solve(B.T @ B, B.T @ v)
        assert distance_to_colspan(v, B) == pytest.approx(np.linalg.norm(v - B @ z), abs=1e-8)


def test_distance_errors():
    with pytest.raises(ValueError):
        distance_to_colspan(np.ones(3), np.ones((4, 2)))
    with pytest.raises(ValueError):
        distance_to_colspan(np.ones(2), np.eye(2))


def test_rank_deficient_basis():
    B = np.array([[1.0, 2.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 0.0]])
    basis = orthonormal_basis(B)
    assert basis.dim == 2
    assert np.allclose(basis.vectors.T @ basis.vectors, np.eye(2))
    assert orthonormal_basis(np.zeros((3, 2))).dim == 0
    comp = complement_basis(basis)
    assert comp.dim == 2
    assert np.allclose(comp.vectors.T @ basis.vectors, 0, atol=1e-14)


def test_projected_block_orthonormal_columns():
    A = np.eye(4)[:, :3]
    W = projected_block(A, [0, 1])
    assert W.shape == (3, 2)
    assert np.allclose(singular_values(W), [1, 1])


def test_projected_block_empty_complement():
    A = np.random.default_rng(24).standard_normal((3, 2))
    W = projected_block(A, [0, 1])
    assert np.allclose(singular_values(W), singular_values(A), atol=1e-10)


def test_projected_block_distance_contract():
    rng = np.random.default_rng(25)
    N, n = 6, 5
    for J in itertools.combinations(range(n), 2):
        A = rng.standard_normal((N, n))
        rest = [c for c in range(n) if c not in J]
        W = projected_block(A, J)
        assert W.shape == (N - len(rest), 2)
        for _ in range(10):
            x = rng.standard_normal(2)
            d = distance_to_colspan(A[:, list(J)] @ x, A[:, rest])
            assert np.linalg.norm(W @ x) == pytest.approx(d, abs=1e-8)


def test_projected_block_degenerate():
    A = np.random.default_rng(26).standard_normal((6, 5))
    A[:, 3] = A[:, 2]
    with pytest.raises(DegenerateSampleError):
        projected_block(A, [0, 1])
    with pytest.raises(ValueError):
        projected_block(A, [0, 0])
