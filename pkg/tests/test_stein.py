"""Path-space Stein machinery: semigroup, generator, constants, W1 sandwich."""

import math

import numpy as np
import pytest

from bridgelab.bridges import DiscretizedPath, time_grid
from bridgelab.pathspace import GridFunction
from bridgelab.potentials import sine_model, zero_model
from bridgelab.stein import (SteinContext, brownian_increment_covariance,
                             default_battery, estimate_stein_constant,
                             generator_apply, semigroup_apply,
                             verify_generator_identities, verify_stein_bound)


def _context():
    return SteinContext(x=np.array([0.3]), y=np.array([-0.2]), T=1.0)


def _probe_path(n_steps=128):
    ctx = _context()
    times = time_grid(1.0, n_steps)
    positions = np.cos(times).reshape(-1, 1) + ctx.anchor(times)
    return ctx, DiscretizedPath(times=times, positions=positions)


def test_anchor_line_hits_both_pins():
    ctx = _context()
    ends = ctx.anchor(np.array([-1.0, 1.0]))
    np.testing.assert_allclose(ends[0], ctx.x)
    np.testing.assert_allclose(ends[1], ctx.y)


def test_mixing_amplitude_is_sqrt_one_minus_exp():
    u = np.array([0.0, 0.5, 3.0])
    np.testing.assert_allclose(SteinContext.sigma(u),
                               np.sqrt(1.0 - np.exp(-2.0 * u)), rtol=1e-12)
    with pytest.raises(ValueError):
        SteinContext.sigma(-0.1)


def test_linear_functionals_are_generator_eigenvectors():
    # A F = -F for functionals linear in the stochastic integral: the gap
    # must vanish to round-off, not merely to sampling error
    ctx, path = _probe_path(256)
    for name, F in default_battery(1.0, 256)[:2]:
        centred = path.positions - ctx.anchor(path.times)
        gap = abs(generator_apply(F, path, ctx)
                  + float(F.f(F.integrals(centred))))
        assert gap <= 1e-12, name


def test_semigroup_at_zero_time_is_the_identity():
    ctx, path = _probe_path()
    _, F = default_battery(1.0, 128)[0]
    G = lambda pos: float(F.f(F.integrals(pos)))
    assert semigroup_apply(G, path, 0.0, ctx, budget=16, seed=1) == \
        pytest.approx(G(path.positions), abs=1e-12)


def test_semigroup_pulls_linear_functionals_to_the_anchor():
    # for a functional linear in the path, the semigroup contracts the gap
    # to its anchor-line value at rate e^{-u}; the mixing noise averages out
    ctx, path = _probe_path()
    _, F = default_battery(1.0, 128)[0]
    G = lambda pos: float(F.f(F.integrals(pos)))
    at_anchor = G(ctx.anchor(path.times))
    gap0 = G(path.positions) - at_anchor
    for u in (0.5, 2.0):
        val = semigroup_apply(G, path, u, ctx, budget=4000, seed=2)
        assert val - at_anchor == pytest.approx(math.exp(-u) * gap0, abs=0.05)


def test_increment_covariance_is_the_overlap_sum():
    n = 64
    h = GridFunction.indicator(-1.0, 0.0, 1.0, n)
    g = GridFunction.from_callable(lambda s: np.cos(s), 1.0, n)
    hv = np.ravel(h.values)[:-1]
    gv = np.ravel(g.values)[:-1]
    # delta sum(h g) minus the pinning correction (delta^2/2T) sum h sum g
    manual = float(h.delta * np.sum(hv * gv)
                   - h.delta ** 2 / 2.0 * np.sum(hv) * np.sum(gv))
    assert brownian_increment_covariance(h, g) == pytest.approx(manual,
                                                                rel=1e-12)


def test_generator_identities_hold_under_both_laws():
    rep = verify_generator_identities(_context(), sine_model(0.2),
                                      budget=30_000, seed=14)
    assert rep.rows
    laws = {row.law for row in rep.rows}
    assert laws == {"brownian", "model"}
    for row in rep.rows:
        assert row.passed, f"{row.name}/{row.law}"
        assert abs(row.mean) <= 3.0 * row.std_error


def test_stein_constant_is_worker_invariant_and_in_range():
    a = estimate_stein_constant(budget=20_000, seed=3, workers=1)
    b = estimate_stein_constant(budget=20_000, seed=3, workers=4)
    assert a.value == b.value
    assert a.std_error == b.std_error
    assert 1.0 < a.value < 1.4
    assert a.std_error < 0.02


def test_flat_curvature_makes_the_distance_vanish():
    # when the curvature field is identically zero the model bridge IS the
    # Brownian bridge: every Lipschitz gap must sit at zero within noise
    rep, = verify_stein_bound(zero_model(), (0.5,), budget=20_000, seed=4,
                              coupling_paths=40)
    assert rep.sup_grad_script_U == 0.0
    assert rep.w1_bound == 0.0
    assert abs(rep.w1_lower) <= 3.0 * rep.w1_lower_se + 1e-12
    assert rep.bound_holds


def test_bound_scales_quadratically_in_horizon():
    reports = verify_stein_bound(sine_model(0.2), (0.25, 0.5), budget=20_000,
                                 seed=5, coupling_paths=40)
    r1, r2 = reports
    assert r2.w1_bound == pytest.approx(4.0 * r1.w1_bound, rel=1e-9)
    for rep in reports:
        assert rep.bound_holds
        assert rep.sandwich_consistent
        assert rep.w1_upper_se >= 0.0
        assert rep.best_functional
