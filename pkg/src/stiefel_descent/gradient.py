"""Embedded gradient field and critical-point certification."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .manifold import membership_residual

DEFAULT_CRIT_TOL = 1e-8

__all__ = [
    "CostModel",
    "CriticalityReport",
    "check_symmetry_caveat",
    "criticality_report",
    "embedded_gradient",
    "finite_difference_gradient",
    "sigma_matrix",
    "vec",
    "unvec",
    "wen_residual",
]


def vec(U: np.ndarray) -> np.ndarray:
    """Stack the columns of ``U`` into one vector ``(u_1, ..., u_p)``."""
    return np.asarray(U, dtype=float).reshape(-1, order="F")


def unvec(u: np.ndarray, n: int, p: int) -> np.ndarray:
    return np.asarray(u, dtype=float).reshape((n, p), order="F")


class CostModel:
    """A smooth cost on the ambient space of n x p matrices.

    Subclasses implement :meth:`value` and :meth:`gradient` for the
    extension ``G``; both take the matrix form ``U`` of ``u = vec(U)``.
    """

    name = "cost"
    n: int
    p: int

    def value(self, U: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, U: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def decrement(self, U: np.ndarray, D: np.ndarray) -> float:
        """``G(U + D) - G(U)``.

        Families override this with a form that avoids subtracting two
        nearly equal costs, so line searches stay meaningful near a minimum.
        """
        return self.value(np.asarray(U) + D) - self.value(U)

    def value_vec(self, u: np.ndarray) -> float:
        return self.value(unvec(u, self.n, self.p))

    def gradient_vec(self, u: np.ndarray) -> np.ndarray:
        return vec(self.gradient(unvec(u, self.n, self.p)))


def sigma_matrix(U: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Lagrange multiplier matrix ``(grad^T U + U^T grad) / 2``.

    Entry ``(a, a)`` is ``<grad_a, u_a>`` and entry ``(b, c)`` is the
    average of ``<grad_c, u_b>`` and ``<grad_b, u_c>``.
    """
    S = np.asarray(U, dtype=float).T @ np.asarray(grad, dtype=float)
    return 0.5 * (S + S.T)


def embedded_gradient(U: np.ndarray, model: CostModel | np.ndarray) -> np.ndarray:
    """``grad G(U) - U Sigma(U)``: the Riemannian gradient in ambient coordinates.

    ``model`` may be a :class:`CostModel` or an already evaluated
    Euclidean gradient.
    """
    U = np.asarray(U, dtype=float)
    grad = model.gradient(U) if isinstance(model, CostModel) else np.asarray(model, dtype=float)
    return grad - U @ sigma_matrix(U, grad)


def wen_residual(U: np.ndarray, grad: np.ndarray) -> float:
    """``||grad U^T - U grad^T||_F``."""
    M = np.asarray(grad, dtype=float) @ np.asarray(U, dtype=float).T
    return float(np.linalg.norm(M - M.T))


@dataclass(frozen=True)
class CriticalityReport:
    symmetry_residual: float
    span_residual: float
    membership_residual: float
    embedded_norm: float
    wen_residual: float
    tol: float
    scale: float
    verdict: bool

    @property
    def gradient_verdict(self) -> bool:
        """Criticality judged by the embedded gradient alone."""
        return self.membership_residual <= self.tol and self.embedded_norm <= self.tol * self.scale

    @property
    def wen_verdict(self) -> bool:
        return self.membership_residual <= self.tol and self.wen_residual <= self.tol * self.scale

    def to_dict(self) -> dict:
        out = asdict(self)
        out["gradient_verdict"] = self.gradient_verdict
        out["wen_verdict"] = self.wen_verdict
        return out


def criticality_report(
    U: np.ndarray,
    model: CostModel | np.ndarray,
    tol: float = DEFAULT_CRIT_TOL,
    relative: bool = False,
) -> CriticalityReport:
    """Check the matrix conditions for ``U`` to be a critical point.

    ``U`` is critical iff ``U^T grad`` is symmetric, ``grad = U U^T grad``
    and ``U^T U = I``. With ``relative=True`` the gradient residuals are
    compared against ``tol * (1 + ||grad||_F)`` instead of ``tol``.
    """
    U = np.asarray(U, dtype=float)
    grad = model.gradient(U) if isinstance(model, CostModel) else np.asarray(model, dtype=float)
    S = U.T @ grad
    sym = float(np.linalg.norm(S - S.T))
    span = float(np.linalg.norm(grad - U @ S))
    memb = membership_residual(U)
    scale = 1.0 + float(np.linalg.norm(grad)) if relative else 1.0
    verdict = sym <= tol * scale and span <= tol * scale and memb <= tol
    return CriticalityReport(
        symmetry_residual=sym,
        span_residual=span,
        membership_residual=memb,
        embedded_norm=float(np.linalg.norm(embedded_gradient(U, grad))),
        wen_residual=wen_residual(U, grad),
        tol=tol,
        scale=scale,
        verdict=bool(verdict),
    )


def finite_difference_gradient(model: CostModel, u: np.ndarray, h: float | None = None) -> np.ndarray:
    """Central-difference estimate of the gradient of ``model`` at ``u = vec(U)``.

    The default step is ``1e-6 * (1 + ||u||)``.
    """
    u = np.asarray(u, dtype=float).ravel()
    if h is None:
        h = 1e-6 * (1.0 + np.linalg.norm(u))
    if h <= 0:
        raise ValueError("step h must be positive")
    g = np.empty_like(u)
    for i in range(u.size):
        e = np.zeros_like(u)
        e[i] = h
        g[i] = (model.value_vec(u + e) - model.value_vec(u - e)) / (2 * h)
    return g


def check_symmetry_caveat(U: np.ndarray, grad: np.ndarray, tol: float = 1e-12) -> bool:
    """True if ``<grad_c, u_b> != <grad_b, u_c>`` for some column pair.

    Needs ``p >= 2``.
    """
    S = np.asarray(U, dtype=float).T @ np.asarray(grad, dtype=float)
    if S.shape[0] < 2:
        raise ValueError("need at least two columns")
    return bool(np.abs(S - S.T).max() > tol)
