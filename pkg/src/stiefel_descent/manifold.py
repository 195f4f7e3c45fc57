"""Primitives on the orthogonal Stiefel manifold St(n, p).

Index sets are stored 0-based as sorted tuples; docstrings use 1-based
row numbers where it helps readability.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

MEMBERSHIP_TOL = 1e-10
RANK_TOL = 1e-8
SKEW_TOL = 1e-12

__all__ = [
    "IndexSet",
    "RowPermutation",
    "StiefelError",
    "assemble_skew",
    "cayley",
    "check_stiefel",
    "coordinate_pairs",
    "extract_coords",
    "membership_residual",
    "permutation_for",
    "polar_projection",
    "random_stiefel",
    "retract",
    "retraction_step",
    "select_full_rank_rows",
    "tangency_residual",
    "tangent_basis",
    "tangent_dimension",
]


class StiefelError(ValueError):
    """Raised for malformed manifold inputs."""


IndexSet = tuple  # sorted tuple of 0-based row indices


def membership_residual(M: np.ndarray) -> float:
    M = np.asarray(M, dtype=float)
    p = M.shape[1]
    return float(np.linalg.norm(M.T @ M - np.eye(p)))


def check_stiefel(M: np.ndarray, tol: float = MEMBERSHIP_TOL) -> tuple[bool, float]:
    """Return ``(is_member, ||M^T M - I_p||_F)``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise StiefelError(f"expected a 2-d matrix, got shape {M.shape}")
    n, p = M.shape
    if p > n:
        raise StiefelError(f"need p <= n, got a {n}x{p} matrix")
    if tol <= 0:
        raise StiefelError("tolerance must be positive")
    res = membership_residual(M)
    return res <= tol, res


def _require_stiefel(U: np.ndarray, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    ok, res = check_stiefel(U, tol)
    if not ok:
        raise StiefelError(f"not a Stiefel point: ||U^T U - I|| = {res:.3e}")
    return U


def random_stiefel(n: int, p: int, rng: np.random.Generator | int | None = None) -> np.ndarray:
    """Draw a point of St(n, p) from the Haar measure (QR of a Gaussian)."""
    rng = np.random.default_rng(rng)
    Q, R = np.linalg.qr(rng.standard_normal((n, p)))
    return Q * np.sign(np.diag(R))


def polar_projection(M: np.ndarray) -> np.ndarray:
    """Closest Stiefel point to ``M`` in Frobenius norm."""
    W, _, Vt = np.linalg.svd(np.asarray(M, dtype=float), full_matrices=False)
    return W @ Vt


def select_full_rank_rows(U: np.ndarray, rank_tol: float = RANK_TOL) -> IndexSet:
    """Pick ``p`` rows of ``U`` forming an invertible ``p x p`` block.

    Greedy row pivoting: at each step take the row with the largest norm
    after removing the span of the rows already chosen. Near-ties (relative
    1e-12) go to the smallest row index, so the result is deterministic.

    Raises
    ------
    StiefelError
        If the chosen block has smallest singular value below
        ``rank_tol * sqrt(p)``.
    """
    U = np.asarray(U, dtype=float)
    n, p = U.shape
    if p > n:
        raise StiefelError(f"need p <= n, got a {n}x{p} matrix")
    R = U.copy()
    chosen: list[int] = []
    for _ in range(p):
        norms = np.linalg.norm(R, axis=1)
        norms[chosen] = -1.0
        best = norms.max()
        k = int(np.flatnonzero(norms >= best * (1 - 1e-12))[0])
        if best <= 0:
            raise StiefelError("matrix is rank deficient")
        q = R[k] / norms[k]
        R -= np.outer(R @ q, q)
        chosen.append(k)
    rows = tuple(sorted(chosen))
    smin = np.linalg.svd(U[list(rows)], compute_uv=False)[-1]
    if smin <= rank_tol * np.sqrt(p):
        raise StiefelError(
            f"no well-conditioned {p}x{p} row block (smallest singular value {smin:.3e})"
        )
    return rows


def _as_skew(Omega: np.ndarray, tol: float = SKEW_TOL) -> np.ndarray:
    Omega = np.asarray(Omega, dtype=float)
    if Omega.ndim != 2 or Omega.shape[0] != Omega.shape[1]:
        raise StiefelError(f"expected a square matrix, got shape {Omega.shape}")
    asym = np.linalg.norm(Omega + Omega.T)
    if asym > tol * max(1.0, np.linalg.norm(Omega)):
        raise StiefelError(f"matrix is not skew-symmetric (||W + W^T|| = {asym:.3e})")
    return Omega


def cayley(Omega: np.ndarray) -> np.ndarray:
    """Cayley transform ``(I + W)(I - W)^{-1}`` of a skew-symmetric ``W``."""
    Omega = _as_skew(Omega)
    eye = np.eye(Omega.shape[0])
    # (I - W) and (I + W) commute, so a left solve gives the same matrix
    return np.linalg.solve(eye - Omega, eye + Omega)


def tangent_dimension(n: int, p: int) -> int:
    return n * p - p * (p + 1) // 2


def coordinate_pairs(rows: IndexSet, n: int) -> list[tuple[int, int]]:
    """Ordered ``(i, j)`` pairs carrying the free entries of a W_{I_p} matrix.

    For each ``i`` in ``rows`` (ascending), every ``j`` with either ``j``
    outside ``rows`` or ``j > i``, ascending.
    """
    inside = set(rows)
    return [
        (i, j)
        for i in sorted(rows)
        for j in range(n)
        if j != i and (j not in inside or j > i)
    ]


def _check_rows(rows: IndexSet, n: int, p: int | None = None) -> tuple[int, ...]:
    rows = tuple(int(r) for r in rows)
    if list(rows) != sorted(set(rows)) or any(r < 0 or r >= n for r in rows):
        raise StiefelError(f"invalid row index set {rows} for n={n}")
    if p is not None and len(rows) != p:
        raise StiefelError(f"index set has {len(rows)} rows, expected {p}")
    return rows


def assemble_skew(coords: np.ndarray, rows: IndexSet, n: int) -> np.ndarray:
    """Build the skew matrix in W_{I_p} from its coordinates."""
    rows = _check_rows(rows, n)
    pairs = coordinate_pairs(rows, n)
    coords = np.asarray(coords, dtype=float).ravel()
    if coords.size != len(pairs):
        raise StiefelError(f"expected {len(pairs)} coordinates, got {coords.size}")
    Omega = np.zeros((n, n))
    if pairs:
        i, j = np.array(pairs).T
        Omega[i, j] = coords
        Omega[j, i] = -coords
    return Omega


def extract_coords(Omega: np.ndarray, rows: IndexSet) -> np.ndarray:
    Omega = np.asarray(Omega, dtype=float)
    pairs = coordinate_pairs(_check_rows(rows, Omega.shape[0]), Omega.shape[0])
    if not pairs:
        return np.zeros(0)
    i, j = np.array(pairs).T
    return Omega[i, j].copy()


def tangent_basis(U: np.ndarray, rows: IndexSet) -> list[np.ndarray]:
    """The matrices ``Lambda_ij U`` spanning the tangent space at ``U``.

    ``Lambda_ij = e_i e_j^T - e_j e_i^T`` ranges over ``coordinate_pairs``.
    """
    U = np.asarray(U, dtype=float)
    n, p = U.shape
    rows = _check_rows(rows, n, p)
    basis = []
    for i, j in coordinate_pairs(rows, n):
        V = np.zeros_like(U)
        V[i] = U[j]
        V[j] = -U[i]
        basis.append(V)
    return basis


def retraction_step(U: np.ndarray, Omega: np.ndarray) -> np.ndarray:
    """The displacement ``C(Omega / 2) U - U``, computed without cancellation.

    ``C(W/2) - I = (I - W/2)^{-1} W``, so the step is a single solve and
    stays accurate to relative precision for tiny ``Omega``.
    """
    U = np.asarray(U, dtype=float)
    Omega = _as_skew(Omega)
    return np.linalg.solve(np.eye(U.shape[0]) - 0.5 * Omega, Omega @ U)


def retract(U: np.ndarray, Omega: np.ndarray) -> np.ndarray:
    """Chart-induced retraction: the tangent vector ``Omega U`` maps to ``C(Omega / 2) U``."""
    U = np.asarray(U, dtype=float)
    if not np.asarray(Omega).any():
        _as_skew(Omega)
        return U.copy()
    return U + retraction_step(U, Omega)


@dataclass(frozen=True)
class RowPermutation:
    """Permutation moving the rows ``rows`` to the top, others kept in order.

    ``order[k]`` is the original (0-based) row placed at position ``k``, so
    ``P @ U == U[order]``.
    """

    order: tuple[int, ...]
    p: int

    @cached_property
    def matrix(self) -> np.ndarray:
        return np.eye(len(self.order))[list(self.order)]

    @property
    def rows(self) -> tuple[int, ...]:
        return self.order[: self.p]

    def apply(self, M: np.ndarray) -> np.ndarray:
        return np.asarray(M)[list(self.order)]

    def undo(self, M: np.ndarray) -> np.ndarray:
        out = np.empty_like(M)
        out[list(self.order)] = M
        return out

    def conjugate_back(self, Omega_perm: np.ndarray) -> np.ndarray:
        """``P^T Omega P`` without forming ``P``."""
        idx = np.asarray(self.order)
        out = np.empty_like(Omega_perm)
        out[np.ix_(idx, idx)] = Omega_perm
        return out


def permutation_for(rows: IndexSet, n: int) -> RowPermutation:
    rows = _check_rows(rows, n)
    inside = set(rows)
    rest = [r for r in range(n) if r not in inside]
    return RowPermutation(order=tuple(rows) + tuple(rest), p=len(rows))


def tangency_residual(U: np.ndarray, V: np.ndarray) -> float:
    """``||U^T V + V^T U||_F``; zero exactly when ``V`` is tangent at ``U``."""
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    if U.shape != V.shape:
        raise StiefelError(f"shape mismatch {U.shape} vs {V.shape}")
    S = U.T @ V
    return float(np.linalg.norm(S + S.T))
