"""Path-space inner product, tail rates, and sampled covariance identities."""

import math

import numpy as np
import pytest

from bridgelab.bridges import BridgeProblem, simulate_bridge
from bridgelab.errors import PreconditionError
from bridgelab.pathspace import (GridFunction, cached_operator, indicator_phi,
                                 indicator_values, inner_product_alpha,
                                 malliavin_derivative, solve_phi,
                                 verify_concentration,
                                 verify_covariance_identity, xi_alpha)
from bridgelab.potentials import quadratic_model, sine_model
from bridgelab.stein import default_battery


def test_indicator_uses_half_weight_at_interior_jumps_only():
    g = GridFunction.indicator(-1.0, 0.0, 1.0, 8)
    np.testing.assert_allclose(g.values.ravel(),
                               [1, 1, 1, 1, 0.5, 0, 0, 0, 0])
    h = GridFunction.indicator(-0.5, 0.5, 1.0, 8)
    np.testing.assert_allclose(h.values.ravel(),
                               [0, 0, 0.5, 1, 1, 1, 0.5, 0, 0])


def test_grid_function_metadata():
    g = GridFunction.from_callable(lambda s: s ** 2, 1.0, 16)
    assert g.T == 1.0
    assert g.n_steps == 16
    assert g.delta == pytest.approx(0.125)
    np.testing.assert_allclose(np.ravel(g.values), g.times ** 2)


def test_inner_product_is_symmetric_and_bilinear():
    T, n = 1.0, 256
    h = GridFunction.from_callable(lambda s: np.cos(s), T, n)
    g = GridFunction.indicator(-T, 0.3, T, n)
    k = GridFunction.from_callable(lambda s: s, T, n)
    a = inner_product_alpha(h, g, 0.7, T)
    b = inner_product_alpha(g, h, 0.7, T)
    assert a == pytest.approx(b, rel=1e-10)
    combo = GridFunction(times=h.times, values=2.5 * h.values + k.values)
    lhs = inner_product_alpha(combo, g, 0.7, T)
    rhs = 2.5 * a + inner_product_alpha(k, g, 0.7, T)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_inner_product_is_positive_semidefinite():
    T, n = 1.0, 256
    for fn in (lambda s: np.sin(3 * s), lambda s: np.exp(s)):
        h = GridFunction.from_callable(fn, T, n)
        assert inner_product_alpha(h, h, 1.0, T) > 0


def test_resolvent_solution_converges_at_second_order():
    alpha, T = 1.0, 1.0
    errs = {}
    for n in (512, 1024):
        h = GridFunction.indicator(-T, 0.0, T, n)
        solved = solve_phi(h, alpha, T)
        closed = indicator_phi(0.0, alpha, T, n)
        errs[n] = float(np.max(np.abs(solved.values - closed.values)))
    assert errs[512] / errs[1024] == pytest.approx(4.0, abs=0.5)


def test_indicator_self_product_approaches_pinned_variance():
    # <1_{[-T,0]}, 1_{[-T,0]}>_1 is the variance of the centre marginal,
    # sinh(1)^2/sinh(2); left-node quadrature carries an O(delta) deficit
    T = 1.0
    exact = math.sinh(1.0) ** 2 / math.sinh(2.0)
    h = GridFunction.indicator(-T, 0.0, T, 1024)
    value = inner_product_alpha(h, h, 1.0, T)
    assert value == pytest.approx(exact, abs=2e-3)
    h2 = GridFunction.indicator(-T, 0.0, T, 2048)
    value2 = inner_product_alpha(h2, h2, 1.0, T)
    assert abs(value2 - exact) < abs(value - exact)


def test_xi_is_inverse_double_variance():
    from bridgelab.bridges import ou_bridge_variance
    for t in (-0.5, 0.0, 0.7):
        var = float(ou_bridge_variance(1.3, 1.0, t))
        assert xi_alpha(t, 1.3, 1.0) == pytest.approx(1.0 / (2 * var), rel=1e-12)
    assert xi_alpha(0.0, 1.0, 1.0) == pytest.approx(1.0 / math.tanh(1.0),
                                                    rel=1e-12)
    assert xi_alpha(0.0, 1.0, 1.0) == pytest.approx(1.3130353, abs=1e-7)


def test_xi_requires_positive_rate():
    with pytest.raises(ValueError):
        xi_alpha(0.0, -1.0, 1.0)


def test_cached_operator_agrees_with_direct_solution():
    T, n = 1.0, 512
    op = cached_operator(0.8, T, n)
    h = GridFunction.indicator(-T, 0.2, T, n)
    g = GridFunction.from_callable(lambda s: np.cos(s), T, n)
    assert op.inner(h, g) == pytest.approx(inner_product_alpha(h, g, 0.8, T),
                                           rel=1e-12)
    phi_cached = np.ravel(op.solve_phi(h))
    phi_direct = np.ravel(solve_phi(h, 0.8, T).values)
    np.testing.assert_allclose(phi_cached, phi_direct, rtol=1e-10, atol=1e-12)


def test_covariance_identity_holds_for_sampled_bridges():
    T = 1.0
    h = GridFunction.indicator(-T, 0.0, T, 512)
    g = GridFunction.from_callable(lambda s: np.cos(np.pi * s / 2.0), T, 512)
    chk = verify_covariance_identity(1.0, T, h, g, budget=20_000, seed=3)
    assert chk.passed
    assert abs(chk.measured - chk.predicted) <= chk.n_sigma * chk.std_error


def test_covariance_identity_disjoint_windows_predicts_negative():
    # disjoint windows are negatively correlated under the pinning
    T = 1.0
    h = GridFunction.indicator(-T, -0.5, T, 512)
    g = GridFunction.indicator(0.5, T, T, 512)
    chk = verify_covariance_identity(1.0, T, h, g, budget=20_000, seed=4)
    assert chk.passed
    assert chk.predicted < 0


def test_concentration_report_is_wilson_coherent():
    problem = BridgeProblem(x=[0.0], y=[0.0], T=1.0, model=quadratic_model(1.0))
    rep = verify_concentration(problem, 0.0, 4000, (0.5, 1.0), seed=5)
    assert rep.alpha_hat == pytest.approx(1.0, abs=1e-6)
    assert rep.n_samples == 4000
    for row in rep.rows:
        est = row.estimate
        assert est.ci_low <= est.p_hat <= est.ci_high
        assert row.bound == pytest.approx(
            math.exp(-xi_alpha(0.0, 1.0, 1.0) * row.R ** 2), rel=1e-6)
        assert row.passed == (est.ci_high <= row.bound)


def test_concentration_needs_quadratic_model():
    problem = BridgeProblem(x=[0.0], y=[0.0], T=1.0, model=sine_model(0.2))
    with pytest.raises(PreconditionError):
        verify_concentration(problem, 0.0, 1000, (1.0,), seed=5)


def test_malliavin_derivative_of_linear_functional_is_its_direction():
    _, F = default_battery(1.0, 128)[0]  # linear in one direction
    problem = BridgeProblem(x=[0.0], y=[0.0], T=1.0, model=quadratic_model(1.0))
    path = simulate_bridge(problem, n_steps=128, seed=6, drift_mode="exact_ou")
    dF = malliavin_derivative(F, path)
    grads = np.ravel(F.grad_f(F.integrals(path.positions)))
    expected = sum(gk * np.ravel(h.values)
                   for gk, h in zip(grads, F.directions))
    np.testing.assert_allclose(np.ravel(dF.values), expected,
                               rtol=1e-9, atol=1e-12)


def test_indicator_values_convention():
    times = np.linspace(-1.0, 1.0, 9)
    vals = indicator_values(times, -1.0, 0.0)
    np.testing.assert_allclose(vals, [1, 1, 1, 1, 0.5, 0, 0, 0, 0])
