"""Damped Newton minimization of the frozen-exponent energy."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .grid import HESSIAN_MU, FrozenProblem, energy, hessian, residual
from .spaces import ExponentField

log = logging.getLogger(__name__)

# predicted decrease below this fraction of |E| is lost in rounding
_ROUNDING = 1e-12


class SolverError(RuntimeError):
    """Base class for solver failures; carries the best iterate and report."""

    def __init__(self, message, best=None, report=None):
        super().__init__(message)
        self.best = best
        self.report = report


class NonConvergence(SolverError):
    pass


class LineSearchStall(SolverError):
    pass


@dataclass(frozen=True)
class NewtonParams:
    tol_residual: float | None = None  # None: 1e-9 * (1 + sup|source|)
    max_iter: int = 100
    c1: float = 1e-4
    backtrack: float = 0.5
    max_halvings: int = 40
    mu: float = HESSIAN_MU

    def __post_init__(self):
        if self.tol_residual is not None and self.tol_residual <= 0:
            raise ValueError("tol_residual must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def tolerance(self, fp: FrozenProblem) -> float:
        if self.tol_residual is not None:
            return self.tol_residual
        return 1e-9 * (1.0 + float(np.max(np.abs(fp.source))))


@dataclass
class FrozenReport:
    iterations: int = 0
    residual: float = float("inf")
    tolerance: float = 0.0
    energy: list = field(default_factory=list)
    backtracks: list = field(default_factory=list)
    # per accepted step: True if taken in the rounding regime
    rounding: list = field(default_factory=list)
    gradient_steps: int = 0
    converged: bool = False


def _sobolev_matrix(fp: FrozenProblem) -> sp.csc_matrix:
    """Dirichlet Laplacian (+ sigma) used to precondition fallback gradient steps."""
    g = fp.grid
    L = fp.sigma * sp.identity(g.n_interior, format="csr")
    for i in range(g.d):
        Dm = g.derivative_matrix(i)
        L = L + Dm.T @ Dm
    return sp.csc_matrix(L)


def _line_search(u, E, direction, slope, fp, params):
    """Backtrack from a unit step; returns (u_new, E_new, halvings) or None."""
    g = fp.grid
    alpha = 1.0
    for k in range(params.max_halvings + 1):
        trial = u + alpha * g.from_interior(direction)
        Et = energy(trial, fp)
        if Et < E and Et <= E + params.c1 * alpha * slope:
            return trial, Et, k
        alpha *= params.backtrack
    return None


def solve_frozen(fp: FrozenProblem, init=None, params: NewtonParams | None = None):
    """Minimize the frozen energy; returns ``(u, FrozenReport)``.

    Each iteration solves the (mu-regularized) Newton system with a sparse
    direct factorization and backtracks until the Armijo condition holds.
    If the Newton direction cannot be accepted, one preconditioned gradient
    step is tried before giving up with LineSearchStall.  Once the predicted
    decrease falls below the rounding level of the energy, a full Newton
    step is accepted when it reduces the residual sup-norm; only there can
    the recorded energy stall at rounding level.
    """
    params = params or NewtonParams()
    g = fp.grid
    if init is None:
        init = fp.anchor if fp.sigma > 0 else g.zeros()
    u = g.check(init).copy()
    tol = params.tolerance(fp)
    report = FrozenReport(tolerance=tol)

    E = energy(u, fp)
    r = residual(u, fp)
    rnorm = float(np.max(np.abs(r)))
    report.energy.append(E)
    report.residual = rnorm
    w = g.weight

    for it in range(params.max_iter):
        if rnorm <= tol:
            report.converged = True
            return u, report
        rin = r[g.interior]
        H = hessian(u, fp, params.mu)
        step = -spsolve(H, rin)
        slope = w * float(rin @ step)
        accepted = None
        rounding = False
        if np.all(np.isfinite(step)) and slope < 0:
            if -slope <= _ROUNDING * abs(E):
                # energy can no longer resolve the decrease; judge by residual
                trial = u + g.from_interior(step)
                if np.max(np.abs(residual(trial, fp))) < rnorm:
                    accepted = (trial, energy(trial, fp), 0)
                    rounding = True
            if accepted is None:
                accepted = _line_search(u, E, step, slope, fp, params)
        if accepted is None:
            step = -spsolve(_sobolev_matrix(fp), rin)
            slope = w * float(rin @ step)
            accepted = _line_search(u, E, step, slope, fp, params)
            report.gradient_steps += 1
            if accepted is None:
                report.iterations = it
                raise LineSearchStall(
                    f"no acceptable step at iteration {it} (residual {rnorm:.3e})",
                    best=u,
                    report=report,
                )
        u, E, halvings = accepted
        r = residual(u, fp)
        rnorm = float(np.max(np.abs(r)))
        report.energy.append(E)
        report.backtracks.append(halvings)
        report.rounding.append(rounding)
        report.iterations = it + 1
        report.residual = rnorm
        log.debug("newton %d: E=%.15g |r|=%.3e halvings=%d", it + 1, E, rnorm, halvings)

    if rnorm <= tol:
        report.converged = True
        return u, report
    raise NonConvergence(
        f"Newton did not reach {tol:.3e} in {params.max_iter} iterations "
        f"(residual {rnorm:.3e})",
        best=u,
        report=report,
    )


def epsilon_scaling_check(p: float, eps: float, source, grid, params=None):
    """Solve with q = p+ = p at eps and at 0.

    With a constant exponent equal to p+ the eps term only rescales the
    operator, so ``u_eps = (1+eps)^(-1/(p-1)) * u_0``.  Returns
    ``(u_eps, u_0, factor)``.
    """
    q = ExponentField.constant([p] * grid.d, grid.edge_shapes)
    fp0 = FrozenProblem(grid, q, source, eps=0.0, p_plus=p)
    fpe = FrozenProblem(grid, q, source, eps=eps, p_plus=p)
    u0, _ = solve_frozen(fp0, params=params)
    ue, _ = solve_frozen(fpe, params=params)
    return ue, u0, (1.0 + eps) ** (-1.0 / (p - 1.0))
