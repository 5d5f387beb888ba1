import numpy as np
import pytest

from anisolve import verify
from anisolve.frozen import FrozenReport
from anisolve.grid import Grid, residual

import oracles


def test_suite_passes_and_is_reproducible():
    a = verify.run_suite(seed=3, trials=8)
    b = verify.run_suite(seed=3, trials=8)
    assert len(a) == len(verify.PROPERTIES)
    assert all(r.passed for r in a)
    assert [(r.name, r.worst) for r in a] == [(r.name, r.worst) for r in b]


def test_property_names_are_unique():
    names = [r.name for r in verify.run_suite(trials=2)]
    assert len(set(names)) == len(names) == len(verify.PROPERTIES)


def test_random_frozen_problem_honours_arguments(rng):
    fp = verify.random_frozen_problem(rng, d=2, eps=0.0, sigma=10.0)
    assert fp.grid.d == 2 and fp.eps == 0.0 and fp.sigma == 10.0
    assert 2.0 <= fp.q.qmin and fp.q.qmax <= 4.0
    assert fp.p_plus >= fp.q.qmax
    assert not np.any(fp.anchor[~fp.grid.interior])


def test_internal_fd_gradient_matches_loop_oracle(rng):
    for _ in range(5):
        fp = verify.random_frozen_problem(rng)
        u = verify.random_grid_function(rng, fp.grid, fp.grid.h)
        np.testing.assert_allclose(verify.fd_gradient(fp, u), oracles.fd_gradient(u, fp), rtol=1e-9, atol=1e-12)
        terms = verify.energy_terms(u, fp)
        assert sorted(terms) == pytest.approx(sorted(oracles.energy_terms(u, fp)), rel=1e-13, abs=1e-300)


def test_residual_scale_bounds_residual(rng):
    fp = verify.random_frozen_problem(rng)
    u = verify.random_grid_function(rng, fp.grid)
    m = fp.grid.interior
    assert np.all(np.abs(residual(u, fp))[m] <= verify.residual_scale(u, fp)[m] * (1 + 1e-12))


def _report(energy, rounding):
    rep = FrozenReport.__new__(FrozenReport)
    rep.energy = energy
    rep.rounding = rounding
    return rep


def test_descent_ok_rules():
    assert verify.descent_ok(_report([3.0, 2.0, 1.0], [False, False]))
    assert not verify.descent_ok(_report([3.0, 3.0], [False]))
    assert verify.descent_ok(_report([3.0, 3.0], [True]))
    assert not verify.descent_ok(_report([3.0, 3.1], [True]))


def test_failing_property_is_reported():
    # a deliberately broken tolerance makes the verdict fail without raising
    res = verify.check_luxemburg_homogeneity(np.random.default_rng(0), 5, rtol=-1.0)
    assert not res.passed and res.trials == 5


def test_random_grid_function_is_pinned(rng):
    g = Grid(2, 5)
    v = verify.random_grid_function(rng, g, 2.0)
    assert not np.any(v[~g.interior])
