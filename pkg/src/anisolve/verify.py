"""Randomized invariant suite behind ``anisolve verify``.

Every property draws its own stream from one seed, so changing the seed
changes the samples but never what is being asserted.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .frozen import NewtonParams, solve_frozen
from .grid import FrozenProblem, Grid, energy, fluxes, gradients, monotonicity_gap, residual
from .spaces import (
    ExponentField,
    conjugate,
    holder_pairing,
    luxemburg_norm,
    modular,
    modular_bounds,
)

log = logging.getLogger(__name__)

DEFAULT_SEED = 42
DEFAULT_TRIALS = 100
MONOTONICITY_EXPONENTS = (2.0, 2.7, 3.0, 4.0, 6.0)


@dataclass
class PropertyResult:
    name: str
    passed: bool
    trials: int
    worst: float
    detail: str = ""


def random_samples(rng, size=None):
    """Random (u, q, weight) on a 1-d sample set with q in [2, 6]."""
    m = int(size or rng.integers(5, 60))
    u = rng.normal(size=m) * rng.uniform(0.1, 3.0)
    q = rng.uniform(2.0, 6.0, size=m)
    return u, q, 1.0 / m


def random_frozen_problem(rng, d=None, eps=None, sigma=None) -> FrozenProblem:
    """Small frozen problem with a variable exponent field in [2, 4]."""
    d = int(d or rng.integers(1, 3))
    n = int(rng.integers(4, 13)) if d == 1 else int(rng.integers(3, 7))
    g = Grid(d, n)
    q = ExponentField(tuple(rng.uniform(2.0, 4.0, size=s) for s in g.edge_shapes))
    eps = float(rng.choice([0.0, 1e-2])) if eps is None else eps
    sigma = float(rng.choice([0.0, 10.0])) if sigma is None else sigma
    return FrozenProblem(
        g,
        q,
        rng.normal(size=g.shape),
        eps=eps,
        p_plus=q.qmax + float(rng.uniform(0.0, 1.0)),
        sigma=sigma,
        anchor=g.pin(rng.normal(size=g.shape)),
    )


def random_grid_function(rng, grid: Grid, scale=1.0):
    return grid.pin(scale * rng.normal(size=grid.shape))


def check_modular_norm(rng, trials: int, rtol=1e-8) -> PropertyResult:
    worst = 0.0
    for k in range(trials):
        u, q, w = random_samples(rng)
        branch = k % 3
        norm0 = luxemburg_norm(u, q, w)
        target = (rng.uniform(1.5, 4.0), rng.uniform(0.1, 0.7), 1.0)[branch]
        u = u * (target / norm0)
        norm = luxemburg_norm(u, q, w)
        rho = modular(u, q, w)
        if branch == 2:
            lo, hi = 1.0, 1.0
        else:
            lo, hi = modular_bounds(norm, q.min(), q.max())
        viol = max(lo - rho, rho - hi, 0.0) / max(abs(rho), 1e-300)
        worst = max(worst, viol)
    return PropertyResult("modular_norm_relations", worst <= rtol, trials, worst)


def check_luxemburg_homogeneity(rng, trials: int, rtol=1e-8) -> PropertyResult:
    worst = 0.0
    for _ in range(trials):
        u, q, w = random_samples(rng)
        lam = rng.uniform(-5.0, 5.0)
        a = luxemburg_norm(lam * u, q, w)
        b = abs(lam) * luxemburg_norm(u, q, w)
        worst = max(worst, abs(a - b) / max(b, 1e-300))
    return PropertyResult("luxemburg_homogeneity", worst <= rtol, trials, worst)


def check_unit_ball(rng, trials: int, tol=1e-10) -> PropertyResult:
    worst = 0.0
    for _ in range(trials):
        u, q, w = random_samples(rng)
        rho = modular(u / luxemburg_norm(u, q, w, tol), q, w)
        worst = max(worst, abs(rho - 1.0))
    return PropertyResult("unit_ball_normalization", worst <= tol, trials, worst)


def check_holder(rng, trials: int, atol=1e-10) -> PropertyResult:
    worst = -np.inf
    for _ in range(trials):
        m = int(rng.integers(5, 60))
        r = rng.uniform(1.1, 8.0, size=m)
        s = conjugate(r)
        u = rng.normal(size=m) * rng.uniform(0.1, 3.0)
        v = rng.normal(size=m) * rng.uniform(0.1, 3.0)
        lhs, rhs = holder_pairing(u, v, r, s, 1.0 / m)
        worst = max(worst, lhs - rhs)
    return PropertyResult("holder_pairing", worst <= atol, trials, float(worst))


def check_monotonicity(rng, trials: int) -> PropertyResult:
    ok = True
    worst = np.inf
    for p in MONOTONICITY_EXPONENTS:
        dim = int(rng.integers(1, 4))
        a = rng.normal(size=(trials, dim)) * rng.uniform(0.1, 3.0, size=(trials, 1))
        b = rng.normal(size=(trials, dim)) * rng.uniform(0.1, 3.0, size=(trials, 1))
        lhs, rhs = monotonicity_gap(a, b, p)
        # relative rounding allowance on the pairing
        ok &= bool(np.all(lhs >= rhs * (1.0 - 1e-12)))
        worst = min(worst, float(np.min(lhs - rhs)))
    return PropertyResult("monotonicity", ok, trials * len(MONOTONICITY_EXPONENTS), worst)


def check_convexity(rng, trials: int) -> PropertyResult:
    worst = -np.inf
    for _ in range(trials):
        fp = random_frozen_problem(rng)
        u = random_grid_function(rng, fp.grid)
        v = random_grid_function(rng, fp.grid)
        th = rng.uniform(0.0, 1.0)
        gap = energy(th * u + (1 - th) * v, fp) - th * energy(u, fp) - (1 - th) * energy(v, fp)
        worst = max(worst, gap)
    return PropertyResult("energy_convexity", worst <= 1e-12, trials, float(worst))


def energy_terms(u, fp: FrozenProblem) -> np.ndarray:
    """The summands of the frozen energy, flattened in a fixed order."""
    g = fp.grid
    w = g.weight
    parts = []
    for i, D in enumerate(gradients(u, g)):
        t = np.abs(D) ** fp.q[i] / fp.q[i]
        if fp.eps:
            t = t + fp.eps / fp.p_plus * np.abs(D) ** fp.p_plus
        parts.append(w * t.ravel())
    parts.append(0.5 * fp.sigma * w * ((u - fp.anchor) ** 2).ravel())
    parts.append(-w * (fp.source * u).ravel())
    return np.concatenate(parts)


def check_operator_monotone(rng, trials: int) -> PropertyResult:
    worst = np.inf
    for _ in range(trials):
        fp = random_frozen_problem(rng)
        u = random_grid_function(rng, fp.grid)
        v = random_grid_function(rng, fp.grid)
        worst = min(worst, fp.grid.inner(residual(u, fp) - residual(v, fp), u - v))
    return PropertyResult("operator_monotonicity", worst >= 0.0, trials, float(worst))


def fd_gradient(fp: FrozenProblem, u, rel_step=1e-6) -> np.ndarray:
    """Central differences of the energy with step rel_step*(1+|u_j|), over h^d.

    The two energies are differenced summand by summand, so terms that do
    not involve u_j cancel exactly instead of swamping the difference.
    """
    g = fp.grid
    out = g.zeros()
    for idx in zip(*np.nonzero(g.interior)):
        step = rel_step * (1.0 + abs(u[idx]))
        up, dn = u.copy(), u.copy()
        up[idx] += step
        dn[idx] -= step
        diff = energy_terms(up, fp) - energy_terms(dn, fp)
        out[idx] = math.fsum(diff) / (up[idx] - dn[idx])
    return out / g.weight


def residual_scale(u, fp: FrozenProblem) -> np.ndarray:
    """Sum of the magnitudes of every contribution to each residual entry."""
    g = fp.grid
    out = np.abs(fp.sigma * (u - fp.anchor)) + np.abs(fp.source)
    for i, F in enumerate(fluxes(u, fp)):
        pad = [(0, 0)] * g.d
        pad[i] = (1, 1)
        Fp = np.abs(np.pad(F, pad))
        n1 = Fp.shape[i]
        out = out + (np.take(Fp, range(n1 - 1), axis=i) + np.take(Fp, range(1, n1), axis=i)) / g.h
    return out


def check_gradient(rng, trials: int, rtol=1e-6) -> PropertyResult:
    """Relative error per component; entries that nearly cancel are measured
    against 1e-3 of their contribution scale instead of their own size."""
    worst = 0.0
    for _ in range(trials):
        fp = random_frozen_problem(rng)
        # edge derivatives of order one keep the flux balance well conditioned
        u = random_grid_function(rng, fp.grid, fp.grid.h)
        mask = fp.grid.interior
        r = residual(u, fp)[mask]
        fd = fd_gradient(fp, u)[mask]
        denom = np.maximum(np.abs(r), 1e-3 * residual_scale(u, fp)[mask])
        worst = max(worst, float(np.max(np.abs(r - fd) / denom)))
    return PropertyResult("gradient_consistency", worst <= rtol, trials, worst)


def descent_ok(rep) -> bool:
    """Strict energy decrease, except rounding-regime steps which may only
    move the energy at rounding level."""
    E = np.asarray(rep.energy)
    dec = np.diff(E)
    slack = 1e-12 * np.abs(E[:-1])
    regime = np.asarray(rep.rounding, dtype=bool)
    return bool(np.all(np.where(regime, dec <= slack, dec < 0)))


def check_newton(rng, trials: int) -> PropertyResult:
    ok = True
    worst = 0.0
    detail = ""
    for k in range(trials):
        fp = random_frozen_problem(rng)
        init = random_grid_function(rng, fp.grid, 0.1)
        try:
            u, rep = solve_frozen(fp, init=init, params=NewtonParams())
        except Exception as err:  # a failure is a verdict here
            ok = False
            detail = f"trial {k}: {err}"
            continue
        dec = np.diff(rep.energy)
        steps_ok = descent_ok(rep) and rep.residual <= rep.tolerance
        steps_ok &= energy(u, fp) <= energy(init, fp)
        worst = max(worst, rep.residual / rep.tolerance)
        if not steps_ok:
            ok = False
            detail = f"trial {k}: residual {rep.residual:.3e}, energy steps {dec.max():.3e}"
    return PropertyResult("newton_descent", ok, trials, worst, detail)


PROPERTIES = (
    check_modular_norm,
    check_luxemburg_homogeneity,
    check_unit_ball,
    check_holder,
    check_monotonicity,
    check_convexity,
    check_operator_monotone,
    check_gradient,
    check_newton,
)


def run_suite(seed: int = DEFAULT_SEED, trials: int = DEFAULT_TRIALS) -> list:
    """Run every property with an independent stream spawned from ``seed``."""
    streams = np.random.SeedSequence(seed).spawn(len(PROPERTIES))
    results = []
    for prop, ss in zip(PROPERTIES, streams):
        res = prop(np.random.default_rng(ss), trials)
        log.info("%s: %s (worst %.3g)", res.name, "pass" if res.passed else "FAIL", res.worst)
        results.append(res)
    return results
