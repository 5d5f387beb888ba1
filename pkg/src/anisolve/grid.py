"""Uniform tensor grids on (0,1)^d with homogeneous Dirichlet data.

A grid function is a float ndarray of shape ``grid.shape`` (one value per
node, axis 0 is x) whose boundary entries are zero.  Derivatives live on
edges: along axis ``i`` the edge array has ``n`` entries on that axis and
``n+1`` on the others.

The discrete energy of a frozen problem is

    E(u) = sum_i sum_edges h^d [ |D_i u|^q_i / q_i + eps/p+ |D_i u|^p+ ]
           + sigma/2 sum_nodes h^d (u - anchor)^2 - sum_nodes h^d source*u

and ``residual`` is its gradient with respect to the interior values in
the lumped ``h^d``-weighted inner product, i.e. ``dE/du_j / h^d``.  That is
the nodal strong form: for q = 2, eps = sigma = 0 it is the usual 3-point
or 5-point Laplacian minus the source.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from .spaces import ExponentField, LayoutError, anisotropic_modular

# Hessian regularization for zero gradients (q > 2); objective is untouched.
HESSIAN_MU = 1e-12


@dataclass(frozen=True)
class Grid:
    d: int
    n: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def weight(self) -> float:
        """Quadrature weight of one node or edge sample, h**d."""
        return self.h**self.d

    @property
    def shape(self) -> tuple:
        return (self.n + 1,) * self.d

    def edge_shape(self, axis: int) -> tuple:
        return tuple(self.n if k == axis else self.n + 1 for k in range(self.d))

    @property
    def edge_shapes(self) -> tuple:
        return tuple(self.edge_shape(i) for i in range(self.d))

    @cached_property
    def axis_nodes(self) -> np.ndarray:
        return np.arange(self.n + 1) / self.n

    def node_coords(self) -> dict:
        """Coordinate arrays keyed 'x' (and 'y'), shaped like a grid function."""
        mesh = np.meshgrid(*([self.axis_nodes] * self.d), indexing="ij")
        return dict(zip("xy", mesh))

    def edge_coords(self, axis: int) -> dict:
        mids = (np.arange(self.n) + 0.5) / self.n
        axes = [mids if k == axis else self.axis_nodes for k in range(self.d)]
        return dict(zip("xy", np.meshgrid(*axes, indexing="ij")))

    @cached_property
    def interior(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[(slice(1, -1),) * self.d] = True
        return mask

    @property
    def n_interior(self) -> int:
        return (self.n - 1) ** self.d

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def pin(self, u) -> np.ndarray:
        """Copy of ``u`` with boundary nodes set to zero."""
        u = np.array(u, dtype=float)
        if u.shape != self.shape:
            raise LayoutError(f"grid function shape {u.shape} != {self.shape}")
        u[~self.interior] = 0.0
        return u

    def check(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != self.shape:
            raise LayoutError(f"grid function shape {u.shape} != {self.shape}")
        if not np.all(np.isfinite(u)):
            raise ValueError("grid function has non-finite values")
        if np.any(u[~self.interior] != 0.0):
            raise ValueError("grid function violates the Dirichlet condition")
        return u

    def from_interior(self, vec) -> np.ndarray:
        u = self.zeros()
        u[self.interior] = vec
        return u

    def derivative_matrix(self, axis: int) -> sp.csr_matrix:
        """Sparse D_i mapping interior unknowns (C order) to edge values."""
        return _derivative_matrix(self.d, self.n, axis)

    def inner(self, u, v) -> float:
        return float(np.sum(self.weight * u * v))

    def l2_norm_sq(self, u) -> float:
        return self.inner(u, u)


@lru_cache(maxsize=64)
def _derivative_matrix(d: int, n: int, axis: int) -> sp.csr_matrix:
    h = 1.0 / n
    diff = sp.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1)) / h
    eye = sp.identity(n + 1)
    if d == 1:
        full = diff
    elif axis == 0:
        full = sp.kron(diff, eye)
    else:
        full = sp.kron(eye, diff)
    mask = np.zeros((n + 1,) * d, dtype=bool)
    mask[(slice(1, -1),) * d] = True
    return sp.csr_matrix(full.tocsc()[:, np.flatnonzero(mask.ravel())])


def edge_derivative(u, axis: int, grid: Grid) -> np.ndarray:
    """(u[j + e_i] - u[j]) / h on every edge along ``axis``."""
    return np.diff(np.asarray(u, dtype=float), axis=axis) / grid.h


def edge_mean(u, axis: int) -> np.ndarray:
    """Mean of the two endpoint values on every edge along ``axis``."""
    u = np.asarray(u, dtype=float)
    n1 = u.shape[axis]
    a = np.take(u, range(n1 - 1), axis=axis)
    b = np.take(u, range(1, n1), axis=axis)
    return 0.5 * (a + b)


def gradients(u, grid: Grid) -> list:
    return [edge_derivative(u, i, grid) for i in range(grid.d)]


@dataclass(frozen=True)
class FrozenProblem:
    """One convex problem with fixed exponents.

    ``sigma`` weights the mass term (u - anchor)^2/2; it is 1/dt inside a
    time step and 0 for elliptic solves.
    """

    grid: Grid
    q: ExponentField
    source: np.ndarray
    eps: float = 0.0
    p_plus: float | None = None
    sigma: float = 0.0
    anchor: np.ndarray | None = None

    def __post_init__(self):
        g = self.grid
        if len(self.q) != g.d:
            raise LayoutError(f"exponent field has {len(self.q)} directions, grid has {g.d}")
        for i, qi in enumerate(self.q.q):
            if qi.shape != g.edge_shape(i):
                raise LayoutError(f"exponents along axis {i} have shape {qi.shape}")
        src = np.asarray(self.source, dtype=float)
        if src.shape != g.shape:
            raise LayoutError(f"source shape {src.shape} != {g.shape}")
        object.__setattr__(self, "source", src)
        anchor = g.zeros() if self.anchor is None else g.check(self.anchor)
        object.__setattr__(self, "anchor", anchor)
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        p_plus = self.q.qmax if self.p_plus is None else float(self.p_plus)
        if p_plus < self.q.qmax - 1e-12:
            raise ValueError(f"p_plus={p_plus} is below the largest exponent {self.q.qmax}")
        object.__setattr__(self, "p_plus", p_plus)


def _abs_pow(a, p):
    with np.errstate(over="ignore"):
        return np.abs(a) ** p


def energy(u, fp: FrozenProblem) -> float:
    g = fp.grid
    w = g.weight
    total = 0.0
    for i, D in enumerate(gradients(u, g)):
        qi = fp.q[i]
        terms = _abs_pow(D, qi) / qi
        if fp.eps:
            terms = terms + fp.eps / fp.p_plus * _abs_pow(D, fp.p_plus)
        total += w * float(np.sum(terms))
    if fp.sigma:
        total += 0.5 * fp.sigma * w * float(np.sum((u - fp.anchor) ** 2))
    total -= w * float(np.sum(fp.source * u))
    return total


def fluxes(u, fp: FrozenProblem) -> list:
    """|D_i u|^(q_i-2) D_i u (+ the eps term) on every edge."""
    out = []
    for i, D in enumerate(gradients(u, fp.grid)):
        F = np.sign(D) * _abs_pow(D, fp.q[i] - 1.0)
        if fp.eps:
            F = F + fp.eps * np.sign(D) * _abs_pow(D, fp.p_plus - 1.0)
        out.append(F)
    return out


def residual(u, fp: FrozenProblem) -> np.ndarray:
    """Nodal strong-form residual; boundary entries are zero."""
    g = fp.grid
    r = np.zeros(g.shape)
    for i, F in enumerate(fluxes(u, fp)):
        pad = [(0, 0)] * g.d
        pad[i] = (1, 1)
        r -= np.diff(np.pad(F, pad), axis=i) / g.h
    if fp.sigma:
        r += fp.sigma * (u - fp.anchor)
    r -= fp.source
    r[~g.interior] = 0.0
    return r


def hessian(u, fp: FrozenProblem, mu: float = HESSIAN_MU) -> sp.csc_matrix:
    """Interior Hessian of E / h^d, regularized by ``mu`` at zero gradients."""
    g = fp.grid
    H = fp.sigma * sp.identity(g.n_interior, format="csr")
    for i, D in enumerate(gradients(u, g)):
        D2 = D**2 + mu
        with np.errstate(over="ignore"):
            wgt = (fp.q[i] - 1.0) * D2 ** ((fp.q[i] - 2.0) / 2.0)
            if fp.eps:
                wgt = wgt + fp.eps * (fp.p_plus - 1.0) * D2 ** ((fp.p_plus - 2.0) / 2.0)
        Dm = g.derivative_matrix(i)
        H = H + Dm.T @ sp.diags(wgt.ravel()) @ Dm
    return sp.csc_matrix(H)


def frozen_modular(u, fp: FrozenProblem) -> float:
    """sum_i sum_edges h^d |D_i u|^q_i for the frozen exponents."""
    return anisotropic_modular(gradients(u, fp.grid), fp.q, fp.grid.weight)


def monotonicity_gap(a, b, p: float):
    """Both sides of <|a|^(p-2)a - |b|^(p-2)b, a-b> >= 2^(2-p)|a-b|^p.

    ``a`` and ``b`` are vectors (last axis) or batches of them; the return
    values have the batch shape.
    """
    if p < 2:
        raise ValueError(f"monotonicity gap needs p >= 2, got {p}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = np.sqrt(np.sum(a * a, axis=-1, keepdims=True))
    nb = np.sqrt(np.sum(b * b, axis=-1, keepdims=True))
    diff = a - b
    lhs = np.sum((na ** (p - 2) * a - nb ** (p - 2) * b) * diff, axis=-1)
    rhs = 2.0 ** (2.0 - p) * np.sum(diff * diff, axis=-1) ** (p / 2.0)
    if lhs.ndim == 0:
        return float(lhs), float(rhs)
    return lhs, rhs
