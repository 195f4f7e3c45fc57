"""Cost families on St(n, p) with analytic gradients and criticality checks."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .gradient import DEFAULT_CRIT_TOL, CostModel

__all__ = [
    "BrockettProblem",
    "CriticalCheck",
    "HetQuadProblem",
    "PenroseProblem",
    "ProblemError",
    "ProcrustesProblem",
    "brockett_enumerate_critical",
    "brockett_invariant_subspace_check",
    "column_pattern",
    "nearest_critical_point",
]

SYM_TOL = 1e-12


class ProblemError(ValueError):
    """Invalid problem data."""


@dataclass(frozen=True)
class CriticalCheck:
    """Residuals of a family-specific criticality test."""

    residuals: dict
    tol: float

    @property
    def verdict(self) -> bool:
        return all(r <= self.tol for r in self.residuals.values())


def _matrix(x, name: str) -> np.ndarray:
    a = np.array(x, dtype=float)
    if a.ndim != 2:
        raise ProblemError(f"{name} must be a 2-d matrix, got shape {a.shape}")
    a.setflags(write=False)
    return a


def _symmetric(x, name: str) -> np.ndarray:
    a = _matrix(x, name)
    if a.shape[0] != a.shape[1]:
        raise ProblemError(f"{name} must be square, got shape {a.shape}")
    if np.abs(a - a.T).max(initial=0.0) > SYM_TOL * max(1.0, np.abs(a).max(initial=0.0)):
        raise ProblemError(f"{name} must be symmetric")
    return a


def _sym_part_norm(S: np.ndarray) -> float:
    return float(np.linalg.norm(S - S.T))


class ProcrustesProblem(CostModel):
    """``G(U) = ||A U - B||_F^2 / 2`` with ``A`` m x n and ``B`` m x p."""

    name = "procrustes"

    def __init__(self, A, B):
        self.A = _matrix(A, "A")
        self.B = _matrix(B, "B")
        if self.A.shape[0] != self.B.shape[0]:
            raise ProblemError(f"A is {self.A.shape} but B is {self.B.shape}: row counts differ")
        self.n = self.A.shape[1]
        self.p = self.B.shape[1]
        if self.p > self.n:
            raise ProblemError(f"need p <= n, got n={self.n}, p={self.p}")

    def value(self, U):
        R = self.A @ U - self.B
        return 0.5 * float(np.sum(R * R))

    def gradient(self, U):
        return self.A.T @ (self.A @ U - self.B)

    def decrement(self, U, D):
        AD = self.A @ D
        return float(np.sum(AD * (self.A @ U - self.B + 0.5 * AD)))

    def critical_check(self, U, tol=DEFAULT_CRIT_TOL) -> CriticalCheck:
        U = np.asarray(U, dtype=float)
        grad = self.gradient(U)
        return CriticalCheck(
            {
                "symmetry": _sym_part_norm(self.B.T @ self.A @ U),
                "span": float(np.linalg.norm(grad - U @ (U.T @ grad))),
            },
            tol,
        )


class PenroseProblem(CostModel):
    """``G(U) = ||A U C - B||_F^2 / 2`` with ``A`` m x n, ``B`` m x q, ``C`` p x q."""

    name = "penrose"

    def __init__(self, A, B, C):
        self.A = _matrix(A, "A")
        self.B = _matrix(B, "B")
        self.C = _matrix(C, "C")
        m, n = self.A.shape
        p, q = self.C.shape
        if self.B.shape != (m, q):
            raise ProblemError(f"B must be {m}x{q} to match A {self.A.shape} and C {self.C.shape}")
        if p > n:
            raise ProblemError(f"need p <= n, got n={n}, p={p}")
        self.n, self.p = n, p

    def value(self, U):
        R = self.A @ U @ self.C - self.B
        return 0.5 * float(np.sum(R * R))

    def gradient(self, U):
        return self.A.T @ (self.A @ U @ self.C - self.B) @ self.C.T

    def decrement(self, U, D):
        E = self.A @ D @ self.C
        return float(np.sum(E * (self.A @ U @ self.C - self.B + 0.5 * E)))

    def critical_check(self, U, tol=DEFAULT_CRIT_TOL) -> CriticalCheck:
        U = np.asarray(U, dtype=float)
        R = self.A @ U @ self.C - self.B
        grad = self.A.T @ R @ self.C.T
        return CriticalCheck(
            {
                "symmetry": _sym_part_norm(self.C @ R.T @ self.A @ U),
                "span": float(np.linalg.norm(grad - U @ (U.T @ grad))),
            },
            tol,
        )


class HetQuadProblem(CostModel):
    """Sum of heterogeneous quadratic forms ``sum_a u_a^T A_a u_a``.

    The gradient of this extension is ``2 [A_1 u_1, ..., A_p u_p]``.
    """

    name = "hetquad"

    def __init__(self, mats):
        mats = [_symmetric(A, f"A_{k + 1}") for k, A in enumerate(mats)]
        if not mats:
            raise ProblemError("need at least one matrix")
        n = mats[0].shape[0]
        if any(A.shape != (n, n) for A in mats):
            raise ProblemError("all A_i must share the same n x n shape")
        if len(mats) > n:
            raise ProblemError(f"need p <= n, got n={n}, p={len(mats)}")
        self.mats = tuple(mats)
        self.n, self.p = n, len(mats)

    def _images(self, U):
        return np.column_stack([A @ U[:, a] for a, A in enumerate(self.mats)])

    def value(self, U):
        U = np.asarray(U, dtype=float)
        return float(np.sum(U * self._images(U)))

    def gradient(self, U):
        return 2.0 * self._images(np.asarray(U, dtype=float))

    def decrement(self, U, D):
        D = np.asarray(D, dtype=float)
        return float(np.sum(D * self._images(2.0 * np.asarray(U, dtype=float) + D)))

    def critical_check(self, U, tol=DEFAULT_CRIT_TOL) -> CriticalCheck:
        U = np.asarray(U, dtype=float)
        AU = self._images(U)
        return CriticalCheck(
            {
                "symmetry": _sym_part_norm(U.T @ AU),
                "span": float(np.linalg.norm(AU - U @ (U.T @ AU))),
            },
            tol,
        )


class BrockettProblem(CostModel):
    """Brockett cost ``sum_a mu_a u_a^T A u_a`` with ``0 <= mu_1 <= ... <= mu_p``."""

    name = "brockett"

    def __init__(self, A, mu):
        self.A = _symmetric(A, "A")
        mu = np.array(mu, dtype=float).ravel()
        if mu.size == 0:
            raise ProblemError("mu must be non-empty")
        if np.any(mu < 0):
            raise ProblemError("weights must be nonnegative")
        if np.any(np.diff(mu) < 0):
            raise ProblemError("weights must be nondecreasing")
        mu.setflags(write=False)
        self.mu = mu
        self.n = self.A.shape[0]
        self.p = mu.size
        if self.p > self.n:
            raise ProblemError(f"need p <= n, got n={self.n}, p={self.p}")

    def as_hetquad(self) -> HetQuadProblem:
        return HetQuadProblem([m * self.A for m in self.mu])

    def value(self, U):
        U = np.asarray(U, dtype=float)
        return float(np.sum((U * (self.A @ U)) @ self.mu))

    def gradient(self, U):
        return 2.0 * (self.A @ np.asarray(U, dtype=float)) * self.mu

    def decrement(self, U, D):
        D = np.asarray(D, dtype=float)
        return float(np.sum((D * (self.A @ (2.0 * np.asarray(U, dtype=float) + D))) @ self.mu))

    def weight_blocks(self) -> list[list[int]]:
        """Column index blocks of equal weight, in order."""
        blocks: list[list[int]] = []
        for a, m in enumerate(self.mu):
            if blocks and self.mu[blocks[-1][0]] == m:
                blocks[-1].append(a)
            else:
                blocks.append([a])
        return blocks

    def is_case_one(self) -> bool:
        """Distinct positive weights and a diagonal ``A`` with distinct entries."""
        d = np.diag(self.A)
        return (
            bool(np.all(self.mu > 0))
            and len(set(self.mu.tolist())) == self.p
            and np.array_equal(self.A, np.diag(d))
            and len(set(d.tolist())) == self.n
        )

    def critical_check(self, U, tol=DEFAULT_CRIT_TOL) -> CriticalCheck:
        U = np.asarray(U, dtype=float)
        AU = self.A @ U
        cross = U.T @ AU * (self.mu[:, None] - self.mu[None, :])
        weighted = AU * self.mu
        return CriticalCheck(
            {
                "cross_weights": float(np.linalg.norm(cross)),
                "span": float(np.linalg.norm(weighted - U @ (U.T @ weighted))),
            },
            tol,
        )


def brockett_enumerate_critical(prob: BrockettProblem) -> list[np.ndarray]:
    """All critical points of a case-I Brockett problem, sorted by cost.

    Each column is a signed standard basis vector with distinct indices,
    giving ``2^p n! / (n - p)!`` points. Ties in cost keep the
    lexicographic order over (indices, sign patterns).
    """
    A = prob.A
    if not np.array_equal(A, np.diag(np.diag(A))):
        raise ProblemError("enumeration needs a diagonal A")
    if len(set(np.diag(A).tolist())) != prob.n:
        raise ProblemError("enumeration needs pairwise distinct diagonal entries")
    if np.any(prob.mu <= 0) or len(set(prob.mu.tolist())) != prob.p:
        raise ProblemError("enumeration needs pairwise distinct, strictly positive weights")
    n, p = prob.n, prob.p
    eye = np.eye(n)
    points = []
    for idx in itertools.permutations(range(n), p):
        for signs in itertools.product((1.0, -1.0), repeat=p):
            points.append(eye[:, list(idx)] * np.array(signs))
    costs = [prob.value(U) for U in points]
    order = sorted(range(len(points)), key=lambda k: costs[k])
    return [points[k] for k in order]


def column_pattern(U: np.ndarray, tol: float = 1e-6) -> str | None:
    """Describe ``U`` as ``[-e2,+e1]`` if each column is a signed basis vector."""
    U = np.asarray(U, dtype=float)
    parts = []
    for col in U.T:
        k = int(np.argmax(np.abs(col)))
        if abs(abs(col[k]) - 1.0) > tol or np.abs(np.delete(col, k)).max(initial=0.0) > tol:
            return None
        parts.append(f"{'+' if col[k] > 0 else '-'}e{k + 1}")
    return "[" + ",".join(parts) + "]"


def nearest_critical_point(prob: BrockettProblem, U: np.ndarray) -> tuple[np.ndarray, float]:
    """Closest enumerated case-I critical point in Frobenius distance."""
    pts = brockett_enumerate_critical(prob)
    dists = [float(np.linalg.norm(U - P)) for P in pts]
    k = int(np.argmin(dists))
    return pts[k], dists[k]


def brockett_invariant_subspace_check(
    prob: BrockettProblem,
    U: np.ndarray,
    partition: list[list[int]] | None = None,
    tol: float = DEFAULT_CRIT_TOL,
) -> bool:
    """Whether each equal-weight block of columns spans an ``A``-invariant subspace.

    ``partition`` lists 0-based column blocks; it defaults to the blocks of
    equal weight and must match them when given. This is a diagnostic; the
    generic criticality report remains the certificate.
    """
    U = np.asarray(U, dtype=float)
    expected = prob.weight_blocks()
    if partition is None:
        partition = expected
    elif [sorted(b) for b in partition] != expected:
        raise ProblemError(f"partition {partition} does not match weight blocks {expected}")
    for block in partition:
        Ul = U[:, block]
        AUl = prob.A @ Ul
        if np.linalg.norm(AUl - Ul @ (Ul.T @ AUl)) > tol:
            return False
    return True
