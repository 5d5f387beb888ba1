"""Discrete variable-exponent Lebesgue calculus.

All integrals use midpoint quadrature: a sample stands for a cell of
measure ``weight`` (``h**d`` on the solver grids).  Functions accept numpy
arrays; exponents may be arrays of the same shape or scalars.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# lower guard for the Luxemburg bracket
_TAU_FLOOR = 1e-300


class LayoutError(ValueError):
    """Samples and exponents (or weights) do not share a layout."""


@dataclass(frozen=True)
class ExponentField:
    """Per-direction exponent samples on edge midpoints.

    ``q[i]`` holds the exponents used for derivatives along axis ``i``.
    Samples below 2 are rejected rather than clamped.
    """

    q: tuple
    qmin: float = field(init=False)
    qmax: float = field(init=False)

    def __post_init__(self):
        arrays = tuple(np.asarray(a, dtype=float) for a in self.q)
        if not arrays:
            raise ValueError("ExponentField needs at least one direction")
        for i, a in enumerate(arrays):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"non-finite exponent sample along axis {i}")
            if np.any(a < 2.0):
                j = np.unravel_index(int(np.argmin(a)), a.shape)
                raise ValueError(
                    f"exponent sample {a[j]:.6g} < 2 along axis {i} at edge {j}"
                )
            a.setflags(write=False)
        object.__setattr__(self, "q", arrays)
        object.__setattr__(self, "qmin", float(min(a.min() for a in arrays)))
        object.__setattr__(self, "qmax", float(max(a.max() for a in arrays)))

    def __len__(self):
        return len(self.q)

    def __getitem__(self, i):
        return self.q[i]

    @classmethod
    def constant(cls, values, shapes) -> "ExponentField":
        """One constant exponent per direction, broadcast to ``shapes``."""
        return cls(tuple(np.full(s, float(v)) for v, s in zip(values, shapes)))


def _layout(u, q, weight):
    u = np.asarray(u, dtype=float)
    q = np.asarray(q, dtype=float)
    if q.ndim and q.shape != u.shape:
        raise LayoutError(f"exponent shape {q.shape} does not match samples {u.shape}")
    w = np.asarray(weight, dtype=float)
    if w.ndim and w.shape != u.shape:
        raise LayoutError(f"weight shape {w.shape} does not match samples {u.shape}")
    return u, q, w


def modular(u, q, weight) -> float:
    """Return sum(weight * |u|**q), the discrete modular of ``u``."""
    u, q, w = _layout(u, q, weight)
    with np.errstate(over="ignore"):
        return float(np.sum(w * np.abs(u) ** q))


def luxemburg_norm(u, q, weight, tol: float = 1e-10) -> float:
    """Luxemburg norm inf{tau > 0 : modular(u/tau) <= 1}.

    Found by bracketing and bisection on the decreasing map
    ``tau -> modular(u/tau)``; the returned ``tau`` satisfies
    ``|modular(u/tau) - 1| <= tol`` unless the bracket has shrunk to
    a few ulps first.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    u, q, w = _layout(u, q, weight)
    if np.any(q < 1):
        raise ValueError("Luxemburg norm needs exponents >= 1")
    a = np.abs(u)
    if not np.any(a * w > 0):
        return 0.0

    def rho(tau):
        with np.errstate(over="ignore"):
            return float(np.sum(w * (a / tau) ** q))

    hi = 1.0
    if rho(hi) > 1.0:
        while rho(hi) > 1.0:
            hi *= 2.0
        lo = hi / 2.0
    else:
        lo = hi
        while lo > _TAU_FLOOR and rho(lo) <= 1.0:
            lo /= 2.0
        hi = lo * 2.0

    # invariant: rho(lo) > 1 >= rho(hi)
    if abs(rho(hi) - 1.0) <= tol:
        return hi
    while True:
        mid = 0.5 * (lo + hi)
        r = rho(mid)
        if abs(r - 1.0) <= tol or not lo < mid < hi:
            return mid
        if r > 1.0:
            lo = mid
        else:
            hi = mid


def anisotropic_modular(derivatives, q: ExponentField, weight) -> float:
    """Sum over directions of modular(D_i u, q_i)."""
    if len(derivatives) != len(q):
        raise LayoutError("number of derivative fields and exponent directions differ")
    return sum(modular(d, qi, weight) for d, qi in zip(derivatives, q.q))


def conjugate(r):
    """Pointwise conjugate exponent r/(r-1)."""
    r = np.asarray(r, dtype=float)
    return r / (r - 1.0)


def holder_pairing(u, v, r, s, weight, tol: float = 1e-10):
    """Both sides of the variable-exponent Hölder inequality.

    Returns ``(|sum(w*u*v)|, (1/r_min + 1/s_min) * ||u||_r * ||v||_s)``.
    """
    u, r, w = _layout(u, r, weight)
    v, s, _ = _layout(v, s, weight)
    if u.shape != v.shape:
        raise LayoutError("u and v must share a layout")
    if np.any(r <= 1) or np.any(s <= 1):
        raise ValueError("Hölder exponents must exceed 1")
    defect = np.abs(1.0 / r + 1.0 / s - 1.0)
    if np.any(defect > 1e-12):
        raise ValueError(f"exponents are not conjugate (max defect {defect.max():.3g})")
    lhs = abs(float(np.sum(w * u * v)))
    const = 1.0 / float(np.min(r)) + 1.0 / float(np.min(s))
    rhs = const * luxemburg_norm(u, r, w, tol) * luxemburg_norm(v, s, w, tol)
    return lhs, rhs


def modular_bounds(norm: float, qmin: float, qmax: float) -> tuple:
    """Interval that must contain the modular of a function with Luxemburg
    norm ``norm``: [norm^qmax, norm^qmin] below 1, [norm^qmin, norm^qmax]
    above 1, {1} at 1."""
    if norm == 1.0:
        return 1.0, 1.0
    a, b = norm**qmin, norm**qmax
    return (min(a, b), max(a, b))
