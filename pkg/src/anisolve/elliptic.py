"""Elliptic problems with solution-dependent exponents.

    -sum_i d_i(|d_i u|^(p_i(u)-2) d_i u) = f(x, u),   u = 0 on the boundary

is solved by Picard iteration: exponents and source are frozen at the
current iterate, the resulting convex problem is solved with an added
eps-weighted p+-growth term, and eps is driven geometrically to eps_min
with warm starts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .frozen import NewtonParams, NonConvergence, SolverError, solve_frozen
from .grid import FrozenProblem, Grid, edge_mean, frozen_modular, residual
from .spaces import ExponentField

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    message: str
    witness: dict | None = None


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def add(self, name, passed, message, witness=None):
        self.checks.append(Check(name, bool(passed), message, witness))


@dataclass(frozen=True)
class ExponentSpec:
    """Exponent functions p_i(t), one per direction, with declared data.

    ``span`` sets the sampling interval [-span, span] used by validation.
    """

    exprs: tuple
    lower: tuple
    upper: tuple
    lipschitz: tuple | None = None
    span: float = 10.0

    def __post_init__(self):
        exprs = tuple(ex.compile_expr(e) for e in self.exprs)
        object.__setattr__(self, "exprs", exprs)
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if self.lipschitz is not None:
            object.__setattr__(self, "lipschitz", tuple(float(v) for v in self.lipschitz))
        n = len(exprs)
        if len(self.lower) != n or len(self.upper) != n:
            raise ValueError("one lower and one upper bound per exponent expression")
        if self.lipschitz is not None and len(self.lipschitz) != n:
            raise ValueError("one Lipschitz constant per exponent expression")
        for e in exprs:
            extra = ex.free_variables(e) - {"t", "u", "s"}
            if extra:
                raise ValueError(f"exponent may only depend on t, got {sorted(extra)}")

    @property
    def dim(self) -> int:
        return len(self.exprs)

    @property
    def p_minus(self) -> float:
        return min(self.lower)

    @property
    def p_plus(self) -> float:
        return max(self.upper)

    @property
    def is_constant(self) -> bool:
        return all(ex.is_constant(e) for e in self.exprs)

    def __call__(self, i: int, t):
        val = ex.evaluate(self.exprs[i], {"t": t, "u": t, "s": t})
        if np.ndim(val) == 0 and np.ndim(t) > 0:
            val = np.full(np.shape(t), val)
        return val

    def validate_into(self, report: ValidationReport, d: int) -> None:
        ts = np.linspace(-self.span, self.span, 4001)
        bounds_ok = True
        msgs = []
        witness = None
        for i in range(self.dim):
            try:
                vals = self(i, ts)
            except ex.EvalError as err:
                report.add("p1", False, f"exponent {i}: {err}")
                return
            lo, hi = self.lower[i], self.upper[i]
            if lo < 2:
                bounds_ok = False
                msgs.append(f"declared lower bound {lo:g} of p_{i + 1} is below 2")
            slack = 1e-9 * max(1.0, abs(hi))
            bad = (vals < max(lo, 2.0) - slack) | (vals > hi + slack)
            if np.any(bad):
                j = int(np.flatnonzero(bad)[0])
                bounds_ok = False
                witness = {"axis": i, "t": float(ts[j]), "p": float(vals[j])}
                msgs.append(
                    f"p_{i + 1}({ts[j]:g}) = {vals[j]:g} outside [{max(lo, 2.0):g}, {hi:g}]"
                )
        if self.p_minus <= d:
            bounds_ok = False
            msgs.append(f"min lower bound {self.p_minus:g} must exceed dimension {d}")
        report.add(
            "p1",
            bounds_ok,
            "condition (p1): exponents bounded, >= 2 and p- > d"
            + ("" if bounds_ok else ": " + "; ".join(msgs)),
            witness,
        )

        if self.lipschitz is None:
            return
        lip_ok = True
        witness = None
        dt = ts[1] - ts[0]
        for i in range(self.dim):
            q = np.abs(np.diff(self(i, ts))) / dt
            c = self.lipschitz[i]
            bad = q > c * (1 + 1e-6)
            if np.any(bad):
                j = int(np.argmax(q))
                lip_ok = False
                witness = {"axis": i, "t": float(ts[j]), "quotient": float(q[j]), "c": c}
        report.add(
            "p2",
            lip_ok,
            "condition (p2): exponents Lipschitz with the declared constants"
            + ("" if lip_ok else f": quotient {witness['quotient']:g} > {witness['c']:g}"),
            witness,
        )


@dataclass(frozen=True)
class EllipticProblem:
    """``source`` is an expression in (x, y, u) or a fixed nodal array."""

    grid: Grid
    exponents: ExponentSpec
    source: object
    growth_c: float = 1.0
    growth_r: float = 1.0
    expect_negative_at_zero: bool = False

    def __post_init__(self):
        if self.exponents.dim != self.grid.d:
            raise ValueError(
                f"{self.exponents.dim} exponent expressions for a {self.grid.d}-d grid"
            )
        src = self.source
        if isinstance(src, str):
            src = ex.parse(src)
        if not isinstance(src, np.ndarray) and not _is_expr(src):
            src = np.asarray(src, dtype=float)
        if isinstance(src, np.ndarray) and src.shape != self.grid.shape:
            raise ValueError(f"source array shape {src.shape} != {self.grid.shape}")
        object.__setattr__(self, "source", src)

    def source_at(self, u, coords=None) -> np.ndarray:
        if isinstance(self.source, np.ndarray):
            return self.source
        env = dict(coords if coords is not None else self.grid.node_coords())
        env["u"] = u
        val = ex.evaluate(self.source, env)
        return np.broadcast_to(val, np.shape(u)).astype(float)


def _is_expr(obj) -> bool:
    return isinstance(obj, (ex.Num, ex.Var, ex.Neg, ex.BinOp, ex.Call))


@dataclass(frozen=True)
class ContinuationParams:
    eps0: float = 1e-2
    factor: float = 0.5
    eps_min: float = 1e-8
    tol_picard: float = 1e-8
    tol_exponent: float = 1e-8
    max_picard: int = 200
    theta: float = 1.0

    def __post_init__(self):
        if not 0 < self.eps_min <= self.eps0:
            raise ValueError("need 0 < eps_min <= eps0")
        if not 0 < self.factor < 1:
            raise ValueError("reduction factor must lie in (0, 1)")
        if not 0 < self.theta <= 1:
            raise ValueError("damping theta must lie in (0, 1]")

    def schedule(self) -> list:
        out = []
        eps = self.eps0
        while eps > self.eps_min * (1 + 1e-12):
            out.append(eps)
            eps *= self.factor
        out.append(self.eps_min)
        return out


class FreezeError(ValueError):
    pass


def freeze(u, prob: EllipticProblem):
    """Exponents p_i(edge mean of u) and nodal source f(x, u) at a known iterate."""
    g = prob.grid
    qs = []
    for i in range(g.d):
        t = edge_mean(u, i)
        try:
            qs.append(prob.exponents(i, t))
        except ex.EvalError as err:
            loc = _locate(err, g.edge_coords(i))
            raise FreezeError(f"exponent p_{i + 1} on axis-{i} edge {loc}: {err}") from err
    try:
        q = ExponentField(tuple(qs))
    except ValueError as err:
        raise FreezeError(str(err)) from err
    try:
        src = prob.source_at(u)
    except ex.EvalError as err:
        raise FreezeError(f"source at node {_locate(err, g.node_coords())}: {err}") from err
    return q, src


def _locate(err, coords) -> dict:
    if err.index is None:
        return {}
    return {k: float(v.ravel()[err.index]) for k, v in coords.items()}


@dataclass
class StageReport:
    eps: float
    picard_iterations: int = 0
    converged: bool = False
    diffs: list = field(default_factory=list)
    drifts: list = field(default_factory=list)
    newton_iterations: list = field(default_factory=list)
    modular: float = 0.0


@dataclass
class EllipticReport:
    stages: list = field(default_factory=list)
    converged: bool = False
    final_eps: float = 0.0
    defect: float = float("inf")
    defect_unregularized: float = float("inf")
    tolerance: float = 0.0
    sup_u: float = 0.0


def frozen_problem(u, prob: EllipticProblem, eps: float) -> FrozenProblem:
    q, src = freeze(u, prob)
    return FrozenProblem(prob.grid, q, src, eps=eps, p_plus=prob.exponents.p_plus)


def solve_elliptic(
    prob: EllipticProblem,
    cp: ContinuationParams | None = None,
    newton: NewtonParams | None = None,
    init=None,
):
    """Picard iteration wrapped in eps-continuation; returns ``(u, EllipticReport)``."""
    cp = cp or ContinuationParams()
    newton = newton or NewtonParams()
    g = prob.grid
    u = g.zeros() if init is None else g.check(init).copy()
    report = EllipticReport()
    q_old, _ = freeze(u, prob)

    for eps in cp.schedule():
        stage = StageReport(eps=eps)
        report.stages.append(stage)
        for m in range(cp.max_picard):
            fp = frozen_problem(u, prob, eps)
            try:
                v, frep = solve_frozen(fp, init=u, params=newton)
            except SolverError as err:
                err.best = u if err.best is None else err.best
                err.report = report
                raise
            stage.newton_iterations.append(frep.iterations)
            u_new = (1.0 - cp.theta) * u + cp.theta * v
            q_new, _ = freeze(u_new, prob)
            diff = float(np.max(np.abs(u_new - u)))
            drift = max(float(np.max(np.abs(a - b))) for a, b in zip(q_new.q, q_old.q))
            stage.diffs.append(diff)
            stage.drifts.append(drift)
            u, q_old = u_new, q_new
            stage.picard_iterations = m + 1
            if diff <= cp.tol_picard and drift <= cp.tol_exponent:
                stage.converged = True
                break
        stage.modular = frozen_modular(u, FrozenProblem(g, q_old, g.zeros()))
        log.info(
            "eps=%.3e picard=%d diff=%.3e modular=%.6g",
            eps,
            stage.picard_iterations,
            stage.diffs[-1],
            stage.modular,
        )
        if not stage.converged:
            raise NonConvergence(
                f"Picard iteration did not converge at eps={eps:.3e} "
                f"within {cp.max_picard} iterations (last diff {stage.diffs[-1]:.3e})",
                best=u,
                report=report,
            )

    fp = frozen_problem(u, prob, report.stages[-1].eps)
    report.final_eps = fp.eps
    report.tolerance = newton.tolerance(fp)
    report.defect = float(np.max(np.abs(residual(u, fp))))
    fp0 = frozen_problem(u, prob, 0.0)
    report.defect_unregularized = float(np.max(np.abs(residual(u, fp0))))
    report.sup_u = float(np.max(np.abs(u)))
    report.converged = True
    return u, report


def validate(prob: EllipticProblem, t_samples: int = 201) -> ValidationReport:
    """Sampled checks of the standing hypotheses; never raises."""
    report = ValidationReport()
    spec = prob.exponents
    d = prob.grid.d
    try:
        spec.validate_into(report, d)
    except Exception as err:  # expression errors are results here
        report.add("p1", False, f"exponent evaluation failed: {err}")

    r, c = prob.growth_r, prob.growth_c
    growth_ok = True
    msg = "condition (f): |f(x,t)| <= c(1+|t|^(r-1)) with 1 <= r < p-"
    witness = None
    if not 1 <= r < spec.p_minus:
        growth_ok = False
        msg += f": r = {r:g} must satisfy 1 <= r < p- = {spec.p_minus:g}"
    if c <= 0:
        growth_ok = False
        msg += f": c = {c:g} must be positive"
    if growth_ok and not isinstance(prob.source, np.ndarray):
        coords = _lattice(prob.grid)
        ts = np.linspace(-spec.span, spec.span, t_samples)
        for t in ts:
            try:
                f = prob.source_at(np.full(coords["x"].shape, t), coords)
            except ex.EvalError as err:
                growth_ok = False
                msg += f": source evaluation failed at t={t:g}: {err}"
                break
            bound = float(c * (1 + abs(t) ** (r - 1)) * (1 + 1e-6))
            worst = float(np.max(np.abs(f)))
            if worst > bound:
                growth_ok = False
                witness = {"t": float(t), "f": worst, "bound": bound}
                msg += f": |f| = {worst:g} exceeds {bound:g} at t = {t:g}"
                break
    report.add("f", growth_ok, msg, witness)

    if prob.expect_negative_at_zero and not isinstance(prob.source, np.ndarray):
        coords = _lattice(prob.grid)
        try:
            f0 = prob.source_at(np.zeros(coords["x"].shape), coords)
            neg = bool(np.all(f0 < 0))
            report.add("f0_negative", neg, f"f(x,0) < 0 (max {np.max(f0):g})")
        except ex.EvalError as err:
            report.add("f0_negative", False, f"f(x,0) evaluation failed: {err}")
    return report


def _lattice(grid: Grid, per_axis: int = 17) -> dict:
    xs = np.linspace(0.0, 1.0, per_axis)
    return dict(zip("xy", np.meshgrid(*([xs] * grid.d), indexing="ij")))


def manufactured_source(u_star, prob_exponents: ExponentSpec, grid: Grid) -> np.ndarray:
    """Source that makes ``u_star`` an exact discrete solution (eps = 0)."""
    probe = EllipticProblem(grid, prob_exponents, np.zeros(grid.shape))
    q, _ = freeze(u_star, probe)
    fp = FrozenProblem(grid, q, np.zeros(grid.shape))
    return residual(u_star, fp)


def self_consistency_gap(u, prob: EllipticProblem, eps: float, newton=None) -> float:
    """sup|S(u) - u| where S freezes at u and solves once more."""
    fp = frozen_problem(u, prob, eps)
    v, _ = solve_frozen(fp, init=u, params=newton)
    return float(np.max(np.abs(v - u)))


__all__ = [
    "Check",
    "ContinuationParams",
    "EllipticProblem",
    "EllipticReport",
    "ExponentSpec",
    "FreezeError",
    "StageReport",
    "ValidationReport",
    "freeze",
    "frozen_problem",
    "manufactured_source",
    "self_consistency_gap",
    "solve_elliptic",
    "validate",
]
