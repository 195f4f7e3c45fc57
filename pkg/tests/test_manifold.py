import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stiefel_descent.manifold import (
    StiefelError,
    assemble_skew,
    cayley,
    check_stiefel,
    coordinate_pairs,
    extract_coords,
    membership_residual,
    permutation_for,
    random_stiefel,
    retract,
    select_full_rank_rows,
    tangency_residual,
    tangent_basis,
    tangent_dimension,
)

from conftest import REFERENCE_STARTS, e


def random_skew(n, rng, scale=1.0):
    M = rng.standard_normal((n, n)) * scale
    return M - M.T


def stiefel_and_rows(n, p, seed):
    U = random_stiefel(n, p, seed)
    return U, select_full_rank_rows(U)


shapes = st.integers(1, 8).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n)))


# -- membership -------------------------------------------------------------


def test_check_stiefel_identity_columns():
    assert check_stiefel(np.eye(4)[:, :2]) == (True, 0.0)


def test_check_stiefel_permuted_columns():
    ok, res = check_stiefel(np.column_stack([e(2, 4), e(1, 4)]))
    assert ok and res == 0.0


def test_check_stiefel_scaled():
    ok, res = check_stiefel(2 * np.eye(4)[:, :2])
    # ||4 I_2 - I_2||_F = 3 sqrt(2)
    assert not ok
    assert res == pytest.approx(3 * np.sqrt(2), rel=1e-15)


def test_check_stiefel_rejects_wide():
    with pytest.raises(StiefelError):
        check_stiefel(np.ones((2, 3)))


# -- row selection ----------------------------------------------------------


def test_rows_of_identity_block():
    assert select_full_rank_rows(np.eye(4)[:, :2]) == (0, 1)


def test_rows_of_swapped_identity():
    U = np.column_stack([e(2, 4), e(1, 4)])
    rows = select_full_rank_rows(U)
    assert rows == (0, 1)
    assert np.linalg.det(U[list(rows)]) == pytest.approx(-1.0)


def test_rows_of_reference_start():
    U = REFERENCE_STARTS["case1_run1"]
    rows = select_full_rank_rows(U)
    assert rows == (0, 1)
    block = U[list(rows)]
    # antidiagonal 2x2 block: det = -(sqrt2/2)(-sqrt2/2) = 1/2
    assert abs(block[0, 0] * block[1, 1] - block[0, 1] * block[1, 0]) == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(shapes, st.integers(0, 2**32 - 1))
def test_rows_deterministic_and_invertible(shape, seed):
    n, p = shape
    U = random_stiefel(n, p, seed)
    rows = select_full_rank_rows(U)
    assert rows == select_full_rank_rows(U.copy())
    assert len(rows) == p and list(rows) == sorted(set(rows))
    assert np.linalg.svd(U[list(rows)], compute_uv=False)[-1] > 1e-8 * np.sqrt(p)


def test_rows_reject_rank_deficient():
    with pytest.raises(StiefelError):
        select_full_rank_rows(np.column_stack([e(1, 3), e(1, 3)]))


# -- Cayley transform -------------------------------------------------------


def test_cayley_of_zero():
    assert np.array_equal(cayley(np.zeros((5, 5))), np.eye(5))


def test_cayley_quarter_turn():
    W = np.array([[0.0, 1.0], [-1.0, 0.0]])
    # (I - W)^{-1} = [[1, 1], [-1, 1]] / 2 and (I + W)(I - W)^{-1} = W
    assert np.allclose(cayley(W), W, atol=1e-15)


def test_cayley_random_orthogonal(rng):
    Q = cayley(random_skew(5, rng))
    assert np.linalg.norm(Q.T @ Q - np.eye(5)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_cayley_is_rotation(n, seed):
    Q = cayley(random_skew(n, np.random.default_rng(seed)))
    assert np.linalg.norm(Q.T @ Q - np.eye(n)) <= 1e-12
    assert np.linalg.det(Q) == pytest.approx(1.0, abs=1e-10)


def test_cayley_rejects_non_skew():
    with pytest.raises(StiefelError):
        cayley(np.array([[0.0, 1.0], [1.0, 0.0]]))


# -- W_{I_p} coordinates ----------------------------------------------------


def test_assemble_zero():
    assert not assemble_skew(np.zeros(3), (0, 1), 3).any()


def test_assemble_three_by_two():
    a, b, c = 1.5, -2.0, 0.25
    Omega = assemble_skew([a, b, c], (0, 1), 3)
    assert np.array_equal(Omega, np.array([[0, a, b], [-a, 0, c], [-b, -c, 0]]))


def test_assemble_single_row_index():
    # n=3, p=1, I_p={2}: the free entries are omega_21 and omega_23
    assert tangent_dimension(3, 1) == 2
    assert coordinate_pairs((1,), 3) == [(1, 0), (1, 2)]
    Omega = assemble_skew([3.0, 4.0], (1,), 3)
    assert np.array_equal(Omega, np.array([[0, -3.0, 0], [3.0, 0, 4.0], [0, -4.0, 0]]))


def test_assemble_wrong_count():
    with pytest.raises(StiefelError):
        assemble_skew(np.zeros(2), (0, 1), 3)


@settings(max_examples=60, deadline=None)
@given(shapes, st.integers(0, 2**32 - 1))
def test_assemble_extract_roundtrip(shape, seed):
    n, p = shape
    rng = np.random.default_rng(seed)
    rows = tuple(sorted(rng.choice(n, p, replace=False).tolist()))
    coords = rng.standard_normal(tangent_dimension(n, p))
    Omega = assemble_skew(coords, rows, n)
    assert np.array_equal(Omega, -Omega.T)
    outside = [i for i in range(n) if i not in rows]
    assert not Omega[np.ix_(outside, outside)].any()
    assert np.array_equal(extract_coords(Omega, rows), coords)
    assert np.array_equal(assemble_skew(extract_coords(Omega, rows), rows, n), Omega)


# -- tangent basis ----------------------------------------------------------


def test_tangent_basis_small():
    U = np.eye(3)[:, :2]
    basis = tangent_basis(U, (0, 1))
    assert len(basis) == 3
    assert np.array_equal(basis[0], np.array([[0, 1], [-1, 0], [0, 0]]))
    assert np.array_equal(basis[1], np.array([[0, 0], [0, 0], [-1, 0]]))
    G = np.array([[np.sum(a * b) for b in basis] for a in basis])
    assert np.linalg.matrix_rank(G) == 3


@settings(max_examples=50, deadline=None)
@given(shapes, st.integers(0, 2**32 - 1))
def test_tangent_basis_gram_nonsingular(shape, seed):
    n, p = shape
    U, rows = stiefel_and_rows(n, p, seed)
    basis = tangent_basis(U, rows)
    assert len(basis) == tangent_dimension(n, p)
    if basis:
        B = np.column_stack([b.ravel() for b in basis])
        assert np.linalg.eigvalsh(B.T @ B)[0] > 1e-10
        assert max(tangency_residual(U, b) for b in basis) <= 1e-12


# -- retraction -------------------------------------------------------------


def test_retract_zero_is_identity(rng):
    U = random_stiefel(5, 3, rng)
    assert np.array_equal(retract(U, np.zeros((5, 5))), U)


def test_retract_first_order(rng):
    U, rows = stiefel_and_rows(5, 2, 7)
    Omega = assemble_skew(rng.standard_normal(tangent_dimension(5, 2)), rows, 5)
    t = 1e-4
    ratio = np.linalg.norm(retract(U, t * Omega) - (U + t * Omega @ U)) / t
    assert ratio < 1e-3


@pytest.mark.parametrize("theta", [0.3, -1.1, 2.5])
def test_retract_circle_closed_form(theta):
    # C(W/2) e_1 with W = [[0, t], [-t, 0]]: s = t/2 and
    # (I - W/2)^{-1} e_1 = (1, -s)/(1+s^2), then (I + W/2) gives (1 - s^2, -2s)/(1+s^2)
    W = np.array([[0.0, theta], [-theta, 0.0]])
    q = theta**2 / 4
    expected = np.array([[(1 - q) / (1 + q)], [-theta / (1 + q)]])
    assert np.allclose(retract(np.array([[1.0], [0.0]]), W), expected, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(shapes, st.integers(0, 2**32 - 1), st.floats(0.0, 10.0))
def test_retract_stays_on_manifold(shape, seed, size):
    n, p = shape
    U, rows = stiefel_and_rows(n, p, seed)
    coords = np.random.default_rng(seed + 1).standard_normal(tangent_dimension(n, p))
    Omega = assemble_skew(coords, rows, n)
    norm = np.linalg.norm(Omega)
    if norm:
        Omega *= size / norm
    assert membership_residual(retract(U, Omega)) <= 1e-10


# -- permutations -----------------------------------------------------------


def test_permutation_identity():
    perm = permutation_for((0, 1, 2), 5)
    assert perm.order == (0, 1, 2, 3, 4)
    assert np.array_equal(perm.matrix, np.eye(5))


def test_permutation_two_four():
    perm = permutation_for((1, 3), 4)
    # rows 2, 4 go to the top; rows 1, 3 follow in order
    assert perm.order == (1, 3, 0, 2)
    P = perm.matrix
    assert np.array_equal(P.T @ P, np.eye(4))
    assert set(np.unique(P)) == {0.0, 1.0} and np.all(P.sum(0) == 1) and np.all(P.sum(1) == 1)
    U = np.arange(8.0).reshape(4, 2)
    assert np.array_equal(P @ U, U[[1, 3, 0, 2]])
    assert np.array_equal(perm.undo(perm.apply(U)), U)


def test_permutation_conjugation(rng):
    perm = permutation_for((1, 3), 4)
    W = random_skew(4, rng)
    P = perm.matrix
    assert np.array_equal(perm.conjugate_back(P @ W @ P.T), W)


# -- tangency ---------------------------------------------------------------


def test_tangency_of_basis_vector():
    U = np.eye(3)[:, :2]
    assert tangency_residual(U, tangent_basis(U, (0, 1))[0]) == 0.0


@pytest.mark.parametrize("p", [1, 2, 3])
def test_tangency_of_point_itself(p, rng):
    U = random_stiefel(5, p, rng)
    assert tangency_residual(U, U) == pytest.approx(2 * np.sqrt(p), rel=1e-12)
