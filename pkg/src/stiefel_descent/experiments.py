"""Experiment configs, runs, gradient checks and the Brockett reference runs."""
from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .costs import (
    BrockettProblem,
    HetQuadProblem,
    PenroseProblem,
    ProblemError,
    ProcrustesProblem,
    brockett_enumerate_critical,
    column_pattern,
    nearest_critical_point,
)
from .descent import DescentConfig, DescentTrace, run_descent
from .gradient import CostModel, CriticalityReport, finite_difference_gradient, vec
from .manifold import membership_residual, polar_projection, random_stiefel

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "GradcheckReport",
    "RunReport",
    "build_problem",
    "gradcheck",
    "parse_config",
    "reference_runs",
    "reproduce_reference_tables",
    "run_experiment",
    "serialize_config",
    "write_trace_csv",
]

PROBLEM_KINDS = ("procrustes", "penrose", "hetquad", "brockett")
# initial points with residual in (EXACT_TOL, REPAIR_TOL] are projected back
EXACT_TOL = 1e-12
REPAIR_TOL = 1e-6


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass
class ExperimentConfig:
    problem: dict
    initial_point: list | None = None
    seed: int | None = None
    descent: DescentConfig = field(default_factory=DescentConfig)
    trace_path: str | None = None
    report_path: str | None = None

    def model(self) -> CostModel:
        return build_problem(self.problem)

    def start(self, seed: int | None = None) -> np.ndarray:
        """Initial point, re-orthonormalized if it is only nearly on the manifold."""
        model = self.model()
        if self.initial_point is None:
            s = self.seed if seed is None else seed
            return random_stiefel(model.n, model.p, np.random.default_rng(s))
        U = np.array(self.initial_point, dtype=float)
        res = membership_residual(U)
        if res > REPAIR_TOL:
            raise ConfigError(f"initial_point: not orthonormal (||U^T U - I|| = {res:.3e})")
        if res > EXACT_TOL:
            U = polar_projection(U)
        return U


def _float_matrix(value, where: str, ndim: int = 2) -> list:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: not a numeric array ({exc})") from None
    if arr.ndim != ndim:
        raise ConfigError(f"{where}: expected a {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{where}: entries must be finite")
    return arr.tolist()


def _normalize_problem(block) -> dict:
    if not isinstance(block, dict):
        raise ConfigError("problem: expected a mapping")
    kind = block.get("kind")
    if kind not in PROBLEM_KINDS:
        raise ConfigError(f"problem.kind: expected one of {PROBLEM_KINDS}, got {kind!r}")
    out: dict = {"kind": kind}
    if kind == "brockett":
        if ("A" in block) == ("A_diag" in block):
            raise ConfigError("problem: give exactly one of A or A_diag")
        if "A" in block:
            out["A"] = _float_matrix(block["A"], "problem.A")
        else:
            out["A_diag"] = _float_matrix(block["A_diag"], "problem.A_diag", 1)
        if "mu" not in block:
            raise ConfigError("problem.mu: missing")
        out["mu"] = _float_matrix(block["mu"], "problem.mu", 1)
        keys = {"kind", "A", "A_diag", "mu"}
    elif kind == "hetquad":
        out["A"] = _float_matrix(block.get("A"), "problem.A", 3)
        keys = {"kind", "A"}
    else:
        names = ("A", "B") if kind == "procrustes" else ("A", "B", "C")
        for name in names:
            if name not in block:
                raise ConfigError(f"problem.{name}: missing")
            out[name] = _float_matrix(block[name], f"problem.{name}")
        keys = {"kind", *names}
    extra = set(block) - keys
    if extra:
        raise ConfigError(f"problem: unknown field(s) {sorted(extra)}")
    return out


def build_problem(block: dict) -> CostModel:
    """Construct the cost model described by a normalized problem block."""
    kind = block["kind"]
    try:
        if kind == "brockett":
            A = np.array(block["A"]) if "A" in block else np.diag(block["A_diag"])
            return BrockettProblem(A, block["mu"])
        if kind == "hetquad":
            return HetQuadProblem(block["A"])
        if kind == "procrustes":
            return ProcrustesProblem(block["A"], block["B"])
        return PenroseProblem(block["A"], block["B"], block["C"])
    except ProblemError as exc:
        raise ConfigError(f"problem: {exc}") from None


_DESCENT_FIELDS = {f.name for f in fields(DescentConfig)}


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment config.

    Schema::

        {
          "problem": {"kind": "brockett", "A_diag": [1, 2, 3, 4], "mu": [1, 2]},
          "initial_point": [[...], ...],      # or omit and give "seed"
          "seed": 0,
          "descent": {"step": "armijo", "max_iters": 300, ...},
          "output": {"trace": "trace.csv", "report": "report.json"}
        }

    ``problem.kind`` is one of procrustes (A, B), penrose (A, B, C),
    hetquad (A: list of n x n matrices) or brockett (A or A_diag, mu).
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    extra = set(raw) - {"problem", "initial_point", "seed", "descent", "output"}
    if extra:
        raise ConfigError(f"config: unknown field(s) {sorted(extra)}")
    if "problem" not in raw:
        raise ConfigError("problem: missing")
    problem = _normalize_problem(raw["problem"])
    model = build_problem(problem)

    initial = raw.get("initial_point")
    if initial is not None:
        initial = _float_matrix(initial, "initial_point")
        shape = np.shape(initial)
        if shape != (model.n, model.p):
            raise ConfigError(
                f"initial_point: expected a {model.n}x{model.p} matrix for this problem, "
                f"got {shape[0]}x{shape[1]}"
            )
    seed = raw.get("seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0):
        raise ConfigError("seed: expected a nonnegative integer")
    if initial is None and seed is None:
        seed = 0

    dblock = raw.get("descent", {})
    if not isinstance(dblock, dict):
        raise ConfigError("descent: expected a mapping")
    unknown = set(dblock) - _DESCENT_FIELDS
    if unknown:
        raise ConfigError(f"descent: unknown field(s) {sorted(unknown)}")
    try:
        descent = DescentConfig(**dblock)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"descent: {exc}") from None

    out = raw.get("output", {})
    if not isinstance(out, dict) or set(out) - {"trace", "report"}:
        raise ConfigError("output: expected a mapping with optional 'trace' and 'report'")
    cfg = ExperimentConfig(
        problem=problem,
        initial_point=initial,
        seed=seed,
        descent=descent,
        trace_path=out.get("trace"),
        report_path=out.get("report"),
    )
    cfg.start()  # validates membership of an explicit initial point
    return cfg


def serialize_config(cfg: ExperimentConfig) -> str:
    data: dict = {"problem": cfg.problem}
    if cfg.initial_point is not None:
        data["initial_point"] = cfg.initial_point
    if cfg.seed is not None:
        data["seed"] = cfg.seed
    data["descent"] = asdict(cfg.descent)
    output = {k: v for k, v in (("trace", cfg.trace_path), ("report", cfg.report_path)) if v}
    if output:
        data["output"] = output
    return json.dumps(data, indent=2)


@dataclass
class RunReport:
    problem: str
    status: str
    iterations: int
    final_cost: float
    final_point: np.ndarray
    criticality: CriticalityReport
    nearest_critical: np.ndarray | None = None
    nearest_distance: float | None = None

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self) -> dict:
        out = {
            "problem": self.problem,
            "status": self.status,
            "converged": self.converged,
            "iterations": self.iterations,
            "final_cost": self.final_cost,
            "final_point": self.final_point.tolist(),
            "criticality": self.criticality.to_dict(),
        }
        if self.nearest_critical is not None:
            out["nearest_critical"] = {
                "pattern": column_pattern(self.nearest_critical),
                "distance": self.nearest_distance,
            }
        return out


def _fmt(x: float) -> str:
    return format(x, ".17g")


def write_trace_csv(trace: DescentTrace, path: str | Path) -> None:
    """One row per iteration; ``lambda`` is the step taken from that iterate."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "cost", "grad_norm", "membership_residual", "lambda", "rows"])
        for r in trace.records:
            w.writerow(
                [
                    r.k,
                    _fmt(r.cost),
                    _fmt(r.grad_norm),
                    _fmt(r.membership),
                    _fmt(r.step),
                    " ".join(str(i + 1) for i in r.rows),
                ]
            )


def make_report(model: CostModel, trace: DescentTrace) -> RunReport:
    report = RunReport(
        problem=model.name,
        status=trace.status,
        iterations=trace.iterations,
        final_cost=trace.cost,
        final_point=trace.point,
        criticality=trace.report,
    )
    if isinstance(model, BrockettProblem) and model.is_case_one():
        report.nearest_critical, report.nearest_distance = nearest_critical_point(model, trace.point)
    return report


def run_experiment(cfg: ExperimentConfig, seed: int | None = None) -> tuple[RunReport, DescentTrace]:
    """Run descent for ``cfg`` and write the trace/report files it names."""
    model = cfg.model()
    trace = run_descent(cfg.start(seed), model, cfg.descent)
    report = make_report(model, trace)
    if cfg.trace_path:
        write_trace_csv(trace, cfg.trace_path)
    if cfg.report_path:
        Path(cfg.report_path).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    return report, trace


@dataclass
class GradcheckReport:
    problem: str
    points: int
    max_rel_error: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.threshold


def gradcheck(
    model: CostModel, points: int = 20, seed: int = 0, threshold: float = 1e-5
) -> GradcheckReport:
    """Compare the analytic gradient with central differences at Gaussian points."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(points):
        U = rng.standard_normal((model.n, model.p))
        g = vec(model.gradient(U))
        fd = finite_difference_gradient(model, vec(U))
        worst = max(worst, float(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-12)))
    return GradcheckReport(model.name, points, worst, threshold)


# -- reference runs on St(4, 2) with A = diag(1, 2, 3, 4) ---------------------

_R2 = np.sqrt(2.0) / 2
_R3 = np.sqrt(3.0) / 3


@dataclass(frozen=True)
class ReferenceRun:
    label: str
    mu: tuple
    start: np.ndarray
    cost: float
    pattern: str | None


def reference_runs() -> list[ReferenceRun]:
    return [
        ReferenceRun(
            "case I, start 1", (1.0, 2.0),
            np.array([[0, _R2], [-_R2, 0], [0, -_R2], [-_R2, 0]]), 4.0, "[-e2,+e1]",
        ),
        ReferenceRun(
            "case I, start 2", (1.0, 2.0),
            np.array([[0, _R3], [-_R2, _R3], [0, 0], [-_R2, -_R3]]), 4.0, "[-e2,-e1]",
        ),
        ReferenceRun(
            "case I, start 3", (1.0, 2.0),
            np.array([[_R3, -_R2], [0, 0], [-_R3, -_R2], [_R3, 0]]), 5.0, "[-e3,-e1]",
        ),
        ReferenceRun(
            "case II", (1.0, 1.0),
            np.array([[0.5, 0], [0.5, -_R2], [-0.5, 0], [-0.5, -_R2]]), 3.0, None,
        ),
    ]


REFERENCE_A = np.diag([1.0, 2.0, 3.0, 4.0])
REFERENCE_LEVELS = {4: 4, 5: 8, 6: 4, 7: 8, 8: 8, 9: 4, 10: 8, 11: 4}


def _pattern_matrix(pattern: str, n: int) -> np.ndarray:
    cols = []
    for token in pattern.strip("[]").split(","):
        e = np.zeros(n)
        e[int(token[2:]) - 1] = -1.0 if token[0] == "-" else 1.0
        cols.append(e)
    return np.column_stack(cols)


def sign_variant_distance(U: np.ndarray, pattern: str) -> float:
    """Frobenius distance from ``U`` to the nearest column-sign variant of ``pattern``."""
    P = np.abs(_pattern_matrix(pattern, U.shape[0]))
    signs = np.where(np.sum(U * P, axis=0) < 0, -1.0, 1.0)
    return float(np.linalg.norm(U - P * signs))


@dataclass
class TableRow:
    label: str
    expected_cost: float
    expected_pattern: str | None
    cost: float
    pattern: str
    verdict: bool
    iterations: int
    match: bool
    detail: str


def reproduce_reference_tables(config: DescentConfig | None = None) -> tuple[list[TableRow], dict]:
    """Rerun the four reference starts; also tabulate the enumerated critical levels."""
    config = config or DescentConfig(max_iters=500)
    rows = []
    for run in reference_runs():
        model = BrockettProblem(REFERENCE_A, run.mu)
        trace = run_descent(run.start, model, config)
        U = trace.point
        cost_ok = abs(trace.cost - run.cost) <= 1e-8
        if run.pattern is not None:
            dist = sign_variant_distance(U, run.pattern)
            match = cost_ok and dist <= 1e-6
            pattern = column_pattern(U) or "-"
            detail = f"dist={dist:.1e}"
        else:
            low = float(np.abs(U[2:]).max())
            top_orth = float(np.linalg.norm(U[:2].T @ U[:2] - np.eye(2)))
            theta = float(np.arctan2(U[1, 0], U[0, 0]))
            match = cost_ok and low <= 1e-6 and top_orth <= 1e-8
            pattern = f"rotation of [e1,e2], theta={theta:.4f}"
            detail = f"rows3-4={low:.1e}"
        rows.append(
            TableRow(
                run.label, run.cost, run.pattern, trace.cost, pattern,
                trace.report.verdict, trace.iterations, bool(match), detail,
            )
        )
    crit = brockett_enumerate_critical(BrockettProblem(REFERENCE_A, (1.0, 2.0)))
    levels = Counter(int(round(BrockettProblem(REFERENCE_A, (1.0, 2.0)).value(U))) for U in crit)
    enum = {
        "points": len(crit),
        "levels": dict(sorted(levels.items())),
        "match": len(crit) == 48 and dict(levels) == REFERENCE_LEVELS,
    }
    return rows, enum
