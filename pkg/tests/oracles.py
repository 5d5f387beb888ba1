"""Independent reference computations written as plain loops."""

import math

import numpy as np


def energy_terms(u, fp):
    """Every summand of the frozen energy, visited edge by edge and node by node."""
    g = fp.grid
    n, d, h = g.n, g.d, g.h
    w = h**d
    terms = []
    nodes = np.ndindex(*g.shape)
    for idx in nodes:
        for axis in range(d):
            if idx[axis] == n:
                continue
            nxt = list(idx)
            nxt[axis] += 1
            D = (u[tuple(nxt)] - u[idx]) / h
            q = fp.q[axis][idx]
            terms.append(w * abs(D) ** q / q)
            if fp.eps:
                terms.append(w * fp.eps / fp.p_plus * abs(D) ** fp.p_plus)
        terms.append(w * 0.5 * fp.sigma * (u[idx] - fp.anchor[idx]) ** 2)
        terms.append(-w * fp.source[idx] * u[idx])
    return terms


def energy(u, fp):
    return math.fsum(energy_terms(u, fp))


def fd_gradient(u, fp, rel_step=1e-6):
    """Central differences of the energy divided by h^d, step rel_step*(1+|u_j|).

    The perturbed energies are differenced term by term before summing, so
    summands that do not involve u_j cancel exactly.
    """
    g = fp.grid
    out = np.zeros(g.shape)
    for idx in zip(*np.nonzero(g.interior)):
        step = rel_step * (1.0 + abs(u[idx]))
        up = u.copy()
        dn = u.copy()
        up[idx] += step
        dn[idx] -= step
        diff = [a - b for a, b in zip(energy_terms(up, fp), energy_terms(dn, fp))]
        out[idx] = math.fsum(diff) / (up[idx] - dn[idx]) / g.weight
    return out


def laplacian(u, h):
    """Standard 3-point (1-d) or 5-point (2-d) Laplacian on interior nodes."""
    out = np.zeros_like(u)
    if u.ndim == 1:
        for j in range(1, len(u) - 1):
            out[j] = (u[j - 1] - 2 * u[j] + u[j + 1]) / h**2
        return out
    m = u.shape[0]
    for i in range(1, m - 1):
        for j in range(1, m - 1):
            out[i, j] = (u[i - 1, j] + u[i + 1, j] + u[i, j - 1] + u[i, j + 1] - 4 * u[i, j]) / h**2
    return out
