"""Steepest descent on St(n, p) with the Cayley chart retraction."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .gradient import CostModel, CriticalityReport, criticality_report, embedded_gradient
from .manifold import (
    MEMBERSHIP_TOL,
    RowPermutation,
    StiefelError,
    assemble_skew,
    check_stiefel,
    membership_residual,
    permutation_for,
    retraction_step,
    select_full_rank_rows,
    tangent_basis,
)

log = logging.getLogger(__name__)

__all__ = [
    "DescentConfig",
    "DescentTrace",
    "IterationRecord",
    "OmegaBlocks",
    "SingularBlockError",
    "StepResult",
    "descent_step",
    "direction_omega",
    "run_descent",
    "solve_omega_closed_form",
    "solve_omega_generic",
]

STEP_STRATEGIES = ("armijo", "fixed")
SOLVERS = ("closed", "generic")


class SingularBlockError(StiefelError):
    """The selected row block is numerically singular; pick rows again."""


@dataclass(frozen=True)
class DescentConfig:
    """Run parameters.

    ``step_size`` is the fixed step for ``step="fixed"`` and the first trial
    step for ``step="armijo"``.
    """

    step: str = "armijo"
    step_size: float = 1.0
    shrink: float = 0.5
    slope: float = 0.1
    max_backtracks: int = 60
    grad_tol: float = 1e-10
    max_iters: int = 300
    solver: str = "closed"
    record_trace: bool = True
    reuse_rows: bool = False
    reuse_threshold: float = 0.1
    crit_tol: float = 1e-8

    def __post_init__(self):
        if self.step not in STEP_STRATEGIES:
            raise ValueError(f"step must be one of {STEP_STRATEGIES}, got {self.step!r}")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if not 0 < self.slope < 1:
            raise ValueError("slope must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.max_backtracks < 0:
            raise ValueError("max_backtracks must be nonnegative")
        if not self.grad_tol >= 0:
            raise ValueError("grad_tol must be nonnegative")

    def with_overrides(self, **kw) -> "DescentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


@dataclass(frozen=True)
class OmegaBlocks:
    """Blocks of the permuted skew matrix ``[[top, right], [-right^T, 0]]``."""

    top: np.ndarray
    right: np.ndarray

    def assemble(self) -> np.ndarray:
        p = self.top.shape[0]
        n = p + self.right.shape[1]
        out = np.zeros((n, n))
        out[:p, :p] = self.top
        out[:p, p:] = self.right
        out[p:, :p] = -self.right.T
        return out


def solve_omega_generic(U: np.ndarray, V: np.ndarray, rows) -> np.ndarray:
    """Coordinates of the W_{I_p} matrix ``Omega`` with ``Omega U = V``.

    Solves the dense linear system over the tangent basis ``Lambda_ij U``.
    """
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    basis = tangent_basis(U, rows)
    if not basis:
        return np.zeros(0)
    B = np.column_stack([b.ravel() for b in basis])
    coords, _, rank, sv = np.linalg.lstsq(B, V.ravel(), rcond=None)
    if rank < B.shape[1] or sv[-1] <= 1e-10 * sv[0]:
        raise SingularBlockError(f"tangent basis is degenerate for rows {tuple(rows)}")
    return coords


def solve_omega_closed_form(Ut: np.ndarray, dGt: np.ndarray, lam: float) -> OmegaBlocks:
    """Solve ``-lam * dGt = Omega_t Ut`` on a row-permuted point.

    ``Ut`` must have an invertible top ``p x p`` block.
    """
    Ut = np.asarray(Ut, dtype=float)
    dGt = np.asarray(dGt, dtype=float)
    p = Ut.shape[1]
    Ubar, Ulow = Ut[:p], Ut[p:]
    Gbar, Glow = dGt[:p], dGt[p:]
    smin = np.linalg.svd(Ubar, compute_uv=False)[-1] if p else 1.0
    if smin <= 1e-12:
        raise SingularBlockError(f"top block is singular (smallest singular value {smin:.3e})")
    UbarT = Ubar.T
    M = Gbar + np.linalg.solve(UbarT, Glow.T @ Ulow)
    # M Ubar^{-1} == (Ubar^{-T} M^T)^T
    top = -lam * np.linalg.solve(UbarT, M.T).T
    right = lam * np.linalg.solve(UbarT, Glow.T)
    asym = np.linalg.norm(top + top.T)
    if asym > 1e-8 * (1.0 + np.linalg.norm(top)):
        log.warning("closed-form top block far from skew (%.3e); input not tangent?", asym)
    elif asym > 0:
        log.debug("symmetrizing top block, asymmetry %.3e", asym)
    top = 0.5 * (top - top.T)
    return OmegaBlocks(top=top, right=right)


def direction_omega(
    U: np.ndarray, dG: np.ndarray, rows, solver: str = "closed"
) -> tuple[np.ndarray, RowPermutation]:
    """Skew ``Omega`` in W_{rows} with ``Omega U = -dG`` (unit step length).

    Returns ``P Omega P^T`` together with the row permutation ``P`` that
    lifts ``rows`` to the top.
    """
    n = U.shape[0]
    perm = permutation_for(rows, n)
    if solver == "closed":
        blocks = solve_omega_closed_form(perm.apply(U), perm.apply(dG), 1.0)
        return blocks.assemble(), perm
    coords = solve_omega_generic(U, -dG, rows)
    idx = list(perm.order)
    return assemble_skew(coords, rows, n)[np.ix_(idx, idx)], perm


@dataclass
class IterationRecord:
    k: int
    cost: float
    grad_norm: float
    membership: float
    rows: tuple
    step: float = float("nan")
    decrement: float = float("nan")
    backtracks: int = 0
    point: np.ndarray | None = None


@dataclass
class StepResult:
    point: np.ndarray
    step: float
    cost: float
    decrement: float
    backtracks: int
    stalled: bool


def _choose_rows(U, config: DescentConfig, previous):
    if config.reuse_rows and previous is not None:
        smin = np.linalg.svd(U[list(previous)], compute_uv=False)[-1]
        if smin >= config.reuse_threshold:
            return previous
    return select_full_rank_rows(U)


def descent_step(
    U: np.ndarray,
    model: CostModel,
    config: DescentConfig = DescentConfig(),
    *,
    dG: np.ndarray | None = None,
    cost: float | None = None,
    rows=None,
) -> StepResult:
    """One update ``U -> C(Omega / 2) U`` with ``Omega U = -lam dG(U)``.

    With Armijo, a step is accepted only if
    ``G(U_new) - G(U) <= -slope * lam * ||dG||^2``, the left side taken from
    ``model.decrement``; if no trial step passes, the current point is
    returned with ``stalled=True``.
    """
    U = np.asarray(U, dtype=float)
    if dG is None:
        dG = embedded_gradient(U, model)
    if cost is None:
        cost = model.value(U)
    gsq = float(np.sum(dG * dG))
    if gsq == 0.0:
        return StepResult(U.copy(), 0.0, cost, 0.0, 0, False)
    if rows is None:
        rows = select_full_rank_rows(U)
    Omega_t, perm = direction_omega(U, dG, rows, config.solver)
    Ut = perm.apply(U)

    def trial(lam):
        D = perm.undo(retraction_step(Ut, lam * Omega_t))
        return U + D, model.decrement(U, D)

    lam = config.step_size
    if config.step == "fixed":
        Unew, dec = trial(lam)
        return StepResult(Unew, lam, model.value(Unew), dec, 0, False)
    for t in range(config.max_backtracks + 1):
        Unew, dec = trial(lam)
        if dec <= -config.slope * lam * gsq:
            return StepResult(Unew, lam, model.value(Unew), dec, t, False)
        lam *= config.shrink
    return StepResult(U.copy(), 0.0, cost, 0.0, config.max_backtracks + 1, True)


@dataclass
class DescentTrace:
    records: list[IterationRecord]
    status: str
    point: np.ndarray
    cost: float
    report: CriticalityReport
    config: DescentConfig = field(repr=False, default_factory=DescentConfig)

    @property
    def iterations(self) -> int:
        return self.records[-1].k if self.records else 0

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def run_descent(
    U0: np.ndarray, model: CostModel, config: DescentConfig = DescentConfig()
) -> DescentTrace:
    """Iterate :func:`descent_step` from ``U0``.

    Stops when ``||dG||_F <= grad_tol`` (status ``"converged"``), when the
    line search fails (``"stalled"``) or after ``max_iters`` steps
    (``"max_iters"``).
    """
    U = np.array(U0, dtype=float)
    ok, res = check_stiefel(U, MEMBERSHIP_TOL)
    if not ok:
        raise StiefelError(f"initial point is not on the manifold (residual {res:.3e})")
    records: list[IterationRecord] = []
    rows = None
    cost = model.value(U)
    k = 0
    while True:
        dG = embedded_gradient(U, model)
        gnorm = float(np.linalg.norm(dG))
        rows = _choose_rows(U, config, rows)
        rec = IterationRecord(
            k=k,
            cost=cost,
            grad_norm=gnorm,
            membership=membership_residual(U),
            rows=tuple(rows),
            point=U.copy() if config.record_trace else None,
        )
        records.append(rec)
        if gnorm <= config.grad_tol:
            status = "converged"
            break
        if k >= config.max_iters:
            status = "max_iters"
            break
        try:
            res = descent_step(U, model, config, dG=dG, cost=cost, rows=rows)
        except SingularBlockError:
            rows = select_full_rank_rows(U)
            res = descent_step(U, model, config, dG=dG, cost=cost, rows=rows)
        rec.step = res.step
        rec.decrement = res.decrement
        rec.backtracks = res.backtracks
        if res.stalled:
            status = "stalled"
            break
        U, cost = res.point, res.cost
        k += 1
    return DescentTrace(
        records=records,
        status=status,
        point=U,
        cost=cost,
        report=criticality_report(U, model, config.crit_tol),
        config=config,
    )
