"""Rothe time stepping for the nonlocal parabolic problem.

    u_t - sum_i d_i(|d_i u|^(p_i(b(u))-2) d_i u) = f(x, t),   u = 0 on the boundary

Each implicit Euler step solves a frozen problem with mass weight 1/h,
anchor u_{k-1} and the Steklov average of f over [(k-1)h, kh].  The
exponents are spatially constant, p_i(s), and the scalar s = b(u_k) is
found by a damped fixed-point iteration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .elliptic import ContinuationParams, ExponentSpec, ValidationReport
from .frozen import NewtonParams, NonConvergence, SolverError, solve_frozen
from .grid import FrozenProblem, Grid, frozen_modular, gradients
from .spaces import ExponentField

log = logging.getLogger(__name__)

GRAD_NORM = "gradnorm"
LQ_NORM = "lq"


@dataclass(frozen=True)
class NonlocalMap:
    """b(u) = ||grad u||_{L^p} (directional form) or ||u||_{L^q}."""

    kind: str
    exponent: float

    def __post_init__(self):
        if self.kind not in (GRAD_NORM, LQ_NORM):
            raise ValueError(f"unknown nonlocal map kind {self.kind!r}")
        if self.exponent < 1:
            raise ValueError("nonlocal map exponent must be >= 1")


def b_eval(u, bmap: NonlocalMap, grid: Grid) -> float:
    p = bmap.exponent
    w = grid.weight
    if bmap.kind == GRAD_NORM:
        total = sum(float(np.sum(w * np.abs(D) ** p)) for D in gradients(u, grid))
    else:
        total = float(np.sum(w * np.abs(u) ** p))
    return total ** (1.0 / p)


def steklov_average(f, t: float, h: float, grid: Grid) -> np.ndarray:
    """(1/h) * integral of f(x, .) over [t, t+h]; composite Simpson, 4 panels."""
    if h <= 0:
        raise ValueError("h must be positive")
    if isinstance(f, np.ndarray):
        return f
    coords = grid.node_coords()
    f = ex.compile_expr(f)
    taus = t + h * np.arange(5) / 4.0
    weights = (1.0, 4.0, 2.0, 4.0, 1.0)
    acc = np.zeros(grid.shape)
    for tau, wgt in zip(taus, weights):
        acc += wgt * np.broadcast_to(ex.evaluate(f, {**coords, "t": tau}), grid.shape)
    return acc / 12.0


@dataclass(frozen=True)
class ParabolicProblem:
    """``source`` is an expression in (x, y, t) or a fixed nodal array;
    ``u0`` an expression in (x, y) or a nodal array."""

    grid: Grid
    exponents: ExponentSpec
    bmap: NonlocalMap
    source: object
    u0: object
    T: float
    N0: int

    def __post_init__(self):
        if self.exponents.dim != self.grid.d:
            raise ValueError(
                f"{self.exponents.dim} exponent expressions for a {self.grid.d}-d grid"
            )
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if self.N0 < 1:
            raise ValueError("N0 must be >= 1")
        for name in ("source", "u0"):
            val = getattr(self, name)
            if isinstance(val, str):
                object.__setattr__(self, name, ex.parse(val))
            elif isinstance(val, (int, float)):
                object.__setattr__(self, name, ex.Num(float(val)))

    @property
    def h(self) -> float:
        return self.T / self.N0

    def sampled_u0(self) -> np.ndarray:
        """Initial data on the nodes, Dirichlet-pinned."""
        if isinstance(self.u0, np.ndarray):
            raw = self.u0
        else:
            raw = np.broadcast_to(
                ex.evaluate(self.u0, self.grid.node_coords()), self.grid.shape
            )
        return self.grid.pin(raw)

    def exponents_at(self, s: float) -> ExponentField:
        vals = [self.exponents(i, s) for i in range(self.grid.d)]
        return ExponentField.constant(vals, self.grid.edge_shapes)


def validate_parabolic(prob: ParabolicProblem) -> ValidationReport:
    report = ValidationReport()
    try:
        prob.exponents.validate_into(report, prob.grid.d)
    except Exception as err:
        report.add("p1", False, f"exponent evaluation failed: {err}")
    try:
        u0 = prob.sampled_u0()
        if isinstance(prob.u0, np.ndarray):
            raw = prob.u0
        else:
            raw = np.broadcast_to(
                ex.evaluate(prob.u0, prob.grid.node_coords()), prob.grid.shape
            )
        report.add(
            "u0",
            bool(np.all(np.isfinite(u0))),
            f"initial data sampled; boundary values pinned (max |u0| there "
            f"{float(np.max(np.abs(raw - u0))):.3g})",
        )
    except ex.EvalError as err:
        report.add("u0", False, f"initial data evaluation failed: {err}")
    k = 0
    try:
        for k in range(1, prob.N0 + 1):
            steklov_average(prob.source, (k - 1) * prob.h, prob.h, prob.grid)
        report.add("source", True, "source evaluates at every Steklov quadrature time")
    except ex.EvalError as err:
        report.add("source", False, f"source evaluation failed in step {k}: {err}")
    return report


@dataclass(frozen=True)
class ParabolicParams:
    newton: NewtonParams = field(default_factory=NewtonParams)
    theta: float = 0.5
    tol_b: float = 1e-10
    max_b: int = 100
    # eps-continuation per step; None keeps eps = 0
    continuation: ContinuationParams | None = None

    def __post_init__(self):
        if not 0 < self.theta <= 1:
            raise ValueError("damping theta must lie in (0, 1]")
        if self.tol_b <= 0:
            raise ValueError("tol_b must be positive")


@dataclass
class StepReport:
    k: int
    t: float
    s: float = 0.0
    b_of_u: float = 0.0
    fixed_point_iterations: int = 0
    s_history: list = field(default_factory=list)
    newton_iterations: list = field(default_factory=list)
    residual: float = 0.0
    tolerance: float = 0.0
    exponents: list = field(default_factory=list)
    l2_sq: float = 0.0
    l2_sq_prev: float = 0.0
    modular: float = 0.0
    source_work: float = 0.0
    ledger_lhs: float = 0.0
    ledger_rhs: float = 0.0
    ledger_slack: float = 0.0
    source_norm_dual: float = 0.0


def step_problem(u_prev, k: int, s: float, prob: ParabolicProblem, eps: float = 0.0):
    """Frozen problem of step k with exponents p_i(s)."""
    g = prob.grid
    h = prob.h
    src = steklov_average(prob.source, (k - 1) * h, h, g)
    return FrozenProblem(
        g,
        prob.exponents_at(s),
        src,
        eps=eps,
        p_plus=max(prob.exponents.p_plus, max(prob.exponents(i, s) for i in range(g.d))),
        sigma=1.0 / h,
        anchor=u_prev,
    )


def _fixed_point(u_prev, k, prob, params, eps, s, u_start, report):
    g = prob.grid
    u = u_start
    constant = prob.exponents.is_constant
    for it in range(params.max_b):
        fp = step_problem(u_prev, k, s, prob, eps)
        u, frep = solve_frozen(fp, init=u, params=params.newton)
        report.newton_iterations.append(frep.iterations)
        report.residual = frep.residual
        report.tolerance = frep.tolerance
        bu = b_eval(u, prob.bmap, g)
        report.s_history.append(s)
        report.fixed_point_iterations += 1
        if constant:
            # exponent does not depend on s: one solve is the fixed point
            return u, bu, fp
        if abs(bu - s) <= params.tol_b * (1.0 + abs(s)):
            return u, s, fp
        s = (1.0 - params.theta) * s + params.theta * bu
    raise NonConvergence(
        f"scalar fixed point did not converge in step {k} within {params.max_b} "
        f"iterations (last s={s:.6g})",
        best=u,
        report=report,
    )


def step(u_prev, k: int, prob: ParabolicProblem, params: ParabolicParams | None = None):
    """One implicit Euler step; returns ``(u_k, StepReport)``.

    The returned ``report.s`` is the scalar used to freeze the exponents of
    ``u_k`` and satisfies ``|b(u_k) - s| <= tol_b (1 + |s|)``.
    """
    params = params or ParabolicParams()
    g = prob.grid
    u_prev = g.check(u_prev)
    h = prob.h
    report = StepReport(k=k, t=k * h)
    s = b_eval(u_prev, prob.bmap, g)
    u = u_prev
    schedule = params.continuation.schedule() if params.continuation else [0.0]
    for eps in schedule:
        u, s, fp = _fixed_point(u_prev, k, prob, params, eps, s, u, report)

    report.s = s
    report.b_of_u = b_eval(u, prob.bmap, g)
    report.exponents = [float(prob.exponents(i, s)) for i in range(g.d)]
    report.l2_sq = g.l2_norm_sq(u)
    report.l2_sq_prev = g.l2_norm_sq(u_prev)
    report.modular = frozen_modular(u, fp)
    report.source_work = 2.0 * h * g.inner(fp.source, u)
    report.ledger_lhs = report.l2_sq + 2.0 * h * report.modular
    report.ledger_rhs = report.l2_sq_prev + report.source_work
    report.ledger_slack = report.ledger_rhs - report.ledger_lhs
    p = _young_exponent(prob, report.exponents)
    pc = p / (p - 1.0)
    report.source_norm_dual = float(np.sum(g.weight * np.abs(fp.source) ** pc))
    return u, report


def _young_exponent(prob, used) -> float:
    return min(prob.exponents.p_minus, min(used))


@dataclass(frozen=True)
class Trajectory:
    """States u_0..u_N0 on the uniform time grid t_k = k h."""

    h: float
    states: tuple
    s: tuple

    @property
    def times(self) -> list:
        return [k * self.h for k in range(len(self.states))]

    def index_at(self, t: float) -> int:
        """k with t in ((k-1)h, kh]; t = 0 gives 0."""
        if t < 0:
            raise ValueError("t must be >= 0")
        if t == 0:
            return 0
        ratio = t / self.h
        k = round(ratio)
        if abs(ratio - k) > 1e-9 * max(1.0, ratio):
            k = math.ceil(ratio)
        k = max(k, 1)
        if k >= len(self.states):
            raise ValueError(f"t = {t} lies beyond the computed horizon")
        return k

    def at(self, t: float) -> np.ndarray:
        """Piecewise-constant interpolant u_h(., t)."""
        return self.states[self.index_at(t)]


@dataclass
class ParabolicReport:
    steps: list = field(default_factory=list)
    l2_sq_initial: float = 0.0
    bound_constant: float = 0.0
    converged: bool = False

    def l2_bound(self, t: float) -> float:
        """A priori bound on ||u_h(t)||^2 for the steps taken so far."""
        return self.l2_sq_initial + self.bound_constant * t


def a_priori_constant(prob: ParabolicProblem, steps) -> float:
    """C in ||u_k||^2 <= ||u_0||^2 + C t_k.

    Testing step k with u_k gives
    ||u_k||^2 + 2h M_k <= ||u_{k-1}||^2 + 2h (g_k, u_k), and the source
    term is split with a discrete Poincaré bound along axis 0 and Young's
    inequality with exponent p = min p-, so that
    2h (g, u) <= 2h (M_k + |E_0| + K ||g||_{p'}^{p'}),
    K = (p-1) p^(-p'), |E_0| = (1+h)^(d-1) the measure of the axis-0 edges.
    """
    g = prob.grid
    if not steps:
        return 0.0
    p = min(_young_exponent(prob, st.exponents) for st in steps)
    pc = p / (p - 1.0)
    K = (p - 1.0) * p ** (-pc)
    edges = (1.0 + g.h) ** (g.d - 1)
    worst = max(st.source_norm_dual for st in steps)
    if worst == 0.0:
        return 0.0
    return 2.0 * (edges + K * worst)


class StepFailure(SolverError):
    """A time step failed; ``trajectory`` holds the states computed so far."""

    def __init__(self, message, cause, trajectory, report):
        super().__init__(message, best=trajectory.states[-1], report=report)
        self.cause = cause
        self.trajectory = trajectory


def solve_parabolic(prob: ParabolicProblem, params: ParabolicParams | None = None):
    """Run all N0 steps; returns ``(Trajectory, ParabolicReport)``."""
    params = params or ParabolicParams()
    g = prob.grid
    u = prob.sampled_u0()
    states = [u]
    ss = [b_eval(u, prob.bmap, g)]
    report = ParabolicReport(l2_sq_initial=g.l2_norm_sq(u))
    for k in range(1, prob.N0 + 1):
        try:
            u, srep = step(u, k, prob, params)
        except SolverError as err:
            traj = Trajectory(prob.h, tuple(states), tuple(ss))
            report.bound_constant = a_priori_constant(prob, report.steps)
            raise StepFailure(f"step {k}: {err}", err, traj, report) from err
        states.append(u)
        ss.append(srep.s)
        report.steps.append(srep)
        log.info(
            "step %d t=%.4g s=%.6g fp_iters=%d |u|^2=%.6g",
            k,
            srep.t,
            srep.s,
            srep.fixed_point_iterations,
            srep.l2_sq,
        )
    report.bound_constant = a_priori_constant(prob, report.steps)
    report.converged = True
    return Trajectory(prob.h, tuple(states), tuple(ss)), report
