"""Pinned diffusions: exact Gaussian bridges, samplers, drift estimators."""

import math

import numpy as np
import pytest

from bridgelab.bridges import (BridgeProblem, bridge_drift_estimate,
                               brownian_bridge_drift, estimate_psi,
                               exact_drift_for, ou_bridge_drift,
                               ou_bridge_mean, ou_bridge_variance,
                               pinned_fluctuations, reverse_path,
                               sample_reciprocal_mixture, simulate_bridge,
                               simulate_bridge_batch, time_grid,
                               translation_coefficient)
from bridgelab.mcengine import stream
from bridgelab.potentials import quadratic_model, sine_model


def test_time_grid_endpoints_and_spacing():
    g = time_grid(1.0, 8)
    assert g[0] == -1.0 and g[-1] == 1.0
    np.testing.assert_allclose(np.diff(g), 0.25)


def test_brownian_bridge_drift_closed_form():
    z, y = np.array([0.2]), np.array([1.0])
    np.testing.assert_allclose(brownian_bridge_drift(z, 0.5, y, 1.0),
                               (y - z) / 0.5)


def test_ou_bridge_drift_anchor_value():
    # at the centre of a unit-curvature unit-horizon bridge pinned 0 -> 1 the
    # drift equals 1/sinh(1) = 0.8509181...
    val = float(ou_bridge_drift(1.0, np.array([0.0]), 0.0,
                                np.array([1.0]), 1.0)[0])
    assert val == pytest.approx(1.0 / math.sinh(1.0), abs=1e-12)
    assert val == pytest.approx(0.8509181, abs=1e-7)


def test_ou_bridge_drift_recovers_brownian_at_small_rate():
    z, y = np.array([0.2]), np.array([-0.4])
    slow = ou_bridge_drift(1e-8, z, 0.25, y, 1.0)
    np.testing.assert_allclose(slow, brownian_bridge_drift(z, 0.25, y, 1.0),
                               rtol=1e-6)


def test_ou_bridge_moments_closed_forms():
    # mean weights are sinh ratios; centred variance is
    # sinh(a(T+t)) sinh(a(T-t)) / (a sinh(2 a T))
    a, T = 1.3, 1.0
    t = 0.2
    x, y = np.array([0.5]), np.array([-1.0])
    wx = math.sinh(a * (T - t)) / math.sinh(2 * a * T)
    wy = math.sinh(a * (T + t)) / math.sinh(2 * a * T)
    np.testing.assert_allclose(ou_bridge_mean(a, x, y, T, t),
                               wx * x + wy * y, rtol=1e-12)
    var = math.sinh(a * (T + t)) * math.sinh(a * (T - t)) / (a * math.sinh(2 * a * T))
    assert float(ou_bridge_variance(a, T, t)) == pytest.approx(var, rel=1e-12)
    # centre-of-bridge variance at a = T = 1 is sinh(1)^2/sinh(2)
    assert float(ou_bridge_variance(1.0, 1.0, 0.0)) == pytest.approx(
        math.sinh(1.0) ** 2 / math.sinh(2.0), rel=1e-12)


def test_translation_coefficient_values():
    assert float(translation_coefficient(1.0, 1.0, 0.0)) == pytest.approx(
        math.sinh(1.0) / math.sinh(2.0), rel=1e-12)
    # stiff curvature: the start pin barely reaches the far half
    assert float(translation_coefficient(20.0, 1.0, 0.5)) == pytest.approx(
        math.exp(-20.0 * 1.5) * (1 - math.exp(-20.0)) /
        (1 - math.exp(-80.0)) * 2 / 2, rel=1e-6)


def test_exact_drift_for_quadratic_and_none_for_sine():
    model = quadratic_model(2.0, shift=0.6)
    y = np.array([0.5])
    drift = exact_drift_for(model, y, 1.0)
    assert drift is not None
    z = np.array([[0.1]])
    # linear shift s moves the bridge frame by -s/a
    offset = -0.6 / 2.0
    expected = ou_bridge_drift(2.0, z[0] - offset, 0.2, y - offset, 1.0)
    np.testing.assert_allclose(drift(0.2, z, 0.8)[0], expected, rtol=1e-10)
    assert exact_drift_for(sine_model(0.2), y, 1.0) is None


def test_simulated_bridge_is_pinned_exactly():
    problem = BridgeProblem(x=[0.3], y=[-0.7], T=1.0, model=quadratic_model(1.0))
    path = simulate_bridge(problem, n_steps=64, seed=5, drift_mode="exact_ou",
                           alpha=1.0)
    assert path.positions.shape == (65, 1)
    assert float(path.positions[0, 0]) == pytest.approx(0.3, abs=1e-14)
    assert float(path.positions[-1, 0]) == pytest.approx(-0.7, abs=1e-12)


def test_exact_sampler_matches_closed_form_covariance():
    # the AR(1)-with-endpoint-correction sampler is exact in law: empirical
    # covariances of the pinned fluctuation must match
    # sinh(a(s+T)) sinh(a(T-t)) / (a sinh(2aT)) at every lag
    a, T, n = 1.0, 1.0, 8
    paths = pinned_fluctuations(a, -T, T, n, 60_000, 1, stream(3, 0))
    times = np.linspace(-T, T, n + 1)
    assert float(np.abs(paths[:, 0]).max()) == 0.0
    assert float(np.abs(paths[:, -1]).max()) == 0.0
    for i, j in ((2, 2), (2, 5), (4, 7), (1, 1)):
        s, t = times[i], times[j]
        expected = (math.sinh(a * (s + T)) * math.sinh(a * (T - t))
                    / (a * math.sinh(2 * a * T)))
        emp = float(np.mean(paths[:, i, 0] * paths[:, j, 0]))
        se = float(np.std(paths[:, i, 0] * paths[:, j, 0], ddof=1)) / math.sqrt(60_000)
        assert abs(emp - expected) <= 5.0 * se


def test_batch_marginal_matches_exact_moments():
    problem = BridgeProblem(x=[0.0], y=[1.0], T=1.0, model=quadratic_model(1.0))
    pos = simulate_bridge_batch(problem, 32, seed=11, drift_mode="exact_ou",
                                alpha=1.0, n_paths=40_000)
    mid = pos[:, 16, 0]
    mean = float(ou_bridge_mean(1.0, np.array([0.0]), np.array([1.0]), 1.0, 0.0)[0])
    var = float(ou_bridge_variance(1.0, 1.0, 0.0))
    assert np.mean(mid) == pytest.approx(mean, abs=5 * math.sqrt(var / 40_000))
    assert np.var(mid, ddof=1) == pytest.approx(var, rel=0.05)


def test_path_weight_drift_estimate_agrees_with_exact():
    model = quadratic_model(1.0)
    problem = BridgeProblem(x=[0.0], y=[1.0], T=1.0, model=model)
    exact = exact_drift_for(model, np.array([1.0]), 1.0)
    est = bridge_drift_estimate(problem, 0.0, [0.0], inner_budget=4000, seed=2)
    target = float(exact(0.0, np.array([[0.0]]), 1.0)[0, 0])
    assert abs(float(est.value[0]) - target) <= 4.0 * float(est.std_error[0])


def test_drift_estimate_base_choice_is_consistent():
    model = quadratic_model(1.0)
    problem = BridgeProblem(x=[0.0], y=[1.0], T=1.0, model=model)
    b = bridge_drift_estimate(problem, 0.0, [0.2], inner_budget=4000, seed=3,
                              base="brownian")
    o = bridge_drift_estimate(problem, 0.0, [0.2], inner_budget=4000, seed=4,
                              base="ou", alpha=1.0)
    joint = math.hypot(float(b.std_error[0]), float(o.std_error[0]))
    assert abs(float(b.value[0]) - float(o.value[0])) <= 4.0 * joint


def test_psi_weight_is_positive_and_normalized_scale():
    model = quadratic_model(1.0)
    problem = BridgeProblem(x=[0.0], y=[0.0], T=1.0, model=model)
    est = estimate_psi(problem, 0.0, np.array([[0.0]]), inner_budget=2000, seed=6)
    assert float(est.value) > 0
    assert float(est.std_error) >= 0


def test_reverse_path_is_an_involution():
    problem = BridgeProblem(x=[0.1], y=[0.9], T=1.0, model=quadratic_model(1.0))
    path = simulate_bridge(problem, n_steps=32, seed=8, drift_mode="exact_ou",
                           alpha=1.0)
    back = reverse_path(reverse_path(path))
    np.testing.assert_allclose(back.times, path.times, atol=1e-14)
    np.testing.assert_allclose(back.positions, path.positions, atol=1e-14)
    flipped = reverse_path(path)
    assert float(flipped.positions[0, 0]) == pytest.approx(0.9, abs=1e-12)
    assert float(flipped.positions[-1, 0]) == pytest.approx(0.1, abs=1e-12)


def test_endpoint_mixture_sampler_pins_to_drawn_endpoints():
    def endpoint_sampler(rng, n):
        return rng.normal(0.0, 0.5, (n, 1)), rng.normal(0.0, 0.5, (n, 1))

    path = sample_reciprocal_mixture(endpoint_sampler, 1.0,
                                     quadratic_model(1.0), 32, seed=21)
    assert path.positions.shape == (33, 1)
    assert np.all(np.isfinite(path.positions))


def test_feynman_kac_mode_pins_the_terminal_point():
    model = sine_model(0.2)
    problem = BridgeProblem(x=[0.0], y=[0.4], T=0.5, model=model)
    pos = simulate_bridge_batch(problem, 40, seed=9, drift_mode="feynman_kac",
                                n_paths=8, inner_budget=64, inner_steps=8)
    assert pos.shape == (8, 41, 1)
    np.testing.assert_allclose(pos[:, -1, 0], 0.4, atol=0.05)
