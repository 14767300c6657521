"""Ground states, invariant densities, marginal convergence, contraction."""

import math

import numpy as np
import pytest
from scipy.linalg import eigh_tridiagonal
from scipy.stats import wasserstein_distance

from bridgelab.errors import PreconditionError, SolverError
from bridgelab.invariant import (DiscreteDistribution, choose_domain,
                                 contraction_coefficient,
                                 endpoint_wasserstein,
                                 gaussian_endpoint_decorrelation,
                                 ground_state_for_model, sample_bridge_marginal,
                                 solve_ground_state, verify_contraction,
                                 verify_marginal_convergence)
from bridgelab.potentials import quadratic_model


def test_ground_state_matches_dense_tridiagonal_eigensolver():
    # assemble the same central-difference Dirichlet operator and hand it to
    # an independent direct eigensolver; the iterative solver must agree
    L, n = 8.0, 1201
    script_U = lambda z: 0.5 * z ** 2
    gs = solve_ground_state(script_U, L=L, n=n)
    z = np.linspace(-L, L, n)[1:-1]
    delta = z[1] - z[0]
    diag = 1.0 / delta ** 2 + script_U(z)
    off = np.full(z.size - 1, -0.5 / delta ** 2)
    vals, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, 0))
    assert gs.k == pytest.approx(float(vals[0]), abs=1e-9)
    direct = np.abs(vecs[:, 0])
    cos = float(np.abs(direct @ gs.psi) /
                (np.linalg.norm(direct) * np.linalg.norm(gs.psi)))
    assert cos > 1.0 - 1e-10


def test_harmonic_ground_state_energy_and_spread():
    gs = solve_ground_state(lambda z: 0.5 * z ** 2, L=10.0, n=8001)
    assert gs.k == pytest.approx(0.5, abs=2e-6)
    assert gs.variance() == pytest.approx(0.5, abs=1e-4)
    assert gs.residual <= 1e-10
    # log-density curvature of the Gaussian ground state is one
    _, vpp = gs.v_second_difference()
    assert float(vpp.min()) >= 1.0 - 1e-3
    assert float(vpp.max()) <= 1.0 + 1e-3


def test_ground_state_energy_shifts_with_the_potential():
    a = solve_ground_state(lambda z: 0.5 * z ** 2, L=8.0, n=1001)
    b = solve_ground_state(lambda z: 0.5 * z ** 2 + 2.0, L=8.0, n=1001)
    assert b.k - a.k == pytest.approx(2.0, abs=1e-9)


def test_ground_state_for_model_quadratic():
    gs = ground_state_for_model(quadratic_model(1.0), n=2001)
    # curvature field z^2/2 - 1/2 has ground energy zero
    assert gs.k == pytest.approx(0.0, abs=1e-4)
    assert gs.variance() == pytest.approx(0.5, abs=2e-4)
    assert np.all(gs.m >= 0)
    assert np.trapezoid(gs.m, gs.z) == pytest.approx(1.0, rel=1e-9)


def test_ground_state_solver_input_guards():
    with pytest.raises(ValueError):
        solve_ground_state(lambda z: z ** 2, L=8.0, n=50)
    with pytest.raises(ValueError):
        solve_ground_state(lambda z: z ** 2, L=-1.0, n=500)


def test_choose_domain_scales_with_the_margin():
    small = choose_domain(lambda z: 0.5 * z ** 2, margin=10.0)
    large = choose_domain(lambda z: 0.5 * z ** 2, margin=50.0)
    assert 0 < small < large


def test_long_horizon_midpoint_matches_the_invariant_density():
    samples = sample_bridge_marginal(quadratic_model(1.0), 1.5, -1.0, 4.0, 0.0,
                                     20_000, seed=11)
    assert samples.shape == (20_000,)
    assert np.mean(samples) == pytest.approx(0.0, abs=4 * math.sqrt(0.5 / 20_000))
    assert np.var(samples, ddof=1) == pytest.approx(0.5, rel=0.05)


def test_marginal_ladder_descends_toward_the_invariant_density():
    rep = verify_marginal_convergence(quadratic_model(1.0), 1.5, -1.0,
                                      (0.5, 1.0, 2.0, 4.0), budget=20_000,
                                      seed=12)
    assert rep.monotone_decreasing
    assert rep.final_w1 < 0.05
    assert rep.ground_state_k == pytest.approx(0.0, abs=1e-4)
    for row in rep.rows:
        # percentile bootstrap: the interval need not cover the point
        # estimate exactly, but it must be ordered and positive
        assert 0 <= row.ci_low <= row.ci_high


def test_contraction_coefficient_closed_form_and_overflow_safety():
    assert contraction_coefficient(1.0, 1.0) == pytest.approx(
        1.0 / (math.sqrt(2.0) * math.cosh(1.0)), rel=1e-12)
    ratio = contraction_coefficient(1.0, 2.0) / contraction_coefficient(1.0, 1.0)
    assert ratio == pytest.approx(math.cosh(1.0) / math.cosh(2.0), rel=1e-12)
    assert ratio == pytest.approx(0.4101543, abs=1e-7)
    with np.errstate(over="raise", invalid="raise"):
        tiny = contraction_coefficient(1.0, 1000.0)
    assert 0.0 <= tiny < 1e-300


def test_dirac_pair_contracts_at_the_sech_rate():
    mu = DiscreteDistribution.dirac(1.0, 1.0)
    nu = DiscreteDistribution.dirac(0.0, 0.0)
    rep = verify_contraction(mu, nu, quadratic_model(1.0), T=1.0, p=1.0,
                             budget=20_000, seed=13)
    # both endpoint coordinates move by one, so the endpoint distance is
    # sqrt(2) and the product bound collapses to sech(1)
    assert rep.endpoint_distance == pytest.approx(math.sqrt(2.0), rel=1e-12)
    # the rate in the bound is the certified curvature, one to a few 1e-9
    assert rep.bound == pytest.approx(1.0 / math.cosh(1.0), rel=1e-6)
    assert rep.ci_low <= rep.measured <= rep.ci_high
    assert rep.passed


def test_endpoint_wasserstein_matches_scipy_on_weighted_atoms():
    mu = DiscreteDistribution(points=np.array([[0.0, 0.0], [1.0, 1.0]]),
                              weights=np.array([0.25, 0.75]))
    nu = DiscreteDistribution(points=np.array([[0.5, 0.5]]),
                              weights=np.array([1.0]))
    got = endpoint_wasserstein(mu, nu, p=1.0)
    # distances collapse to one dimension along the diagonal here
    a = np.array([0.0, 1.0]) * math.sqrt(2.0)
    b = np.array([0.5]) * math.sqrt(2.0)
    want = wasserstein_distance(a, b, u_weights=[0.25, 0.75], v_weights=[1.0])
    assert got == pytest.approx(want, rel=1e-9)


def test_endpoint_decorrelation_closed_form():
    rep = gaussian_endpoint_decorrelation(1.0, 1.0)
    s2 = 0.5
    c = math.exp(-2.0) * s2
    w2_sq = 4 * s2 - 2 * math.sqrt(s2) * (math.sqrt(s2 + c) + math.sqrt(s2 - c))
    assert rep.exact_w2 == pytest.approx(math.sqrt(w2_sq), rel=1e-12)
    # the exact distance sits between the two readings of the comparison
    assert rep.exact_w2 <= rep.bound_inner_root or rep.exact_w2 <= rep.bound_outer_root
    with pytest.raises(ValueError):
        gaussian_endpoint_decorrelation(1.0, 1.0, p=1.0)
