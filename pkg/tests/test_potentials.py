"""Potential models and the curvature field derived from them."""

import math

import numpy as np
import pytest

from bridgelab.potentials import (convexity_certificate, from_callable,
                                  make_potential, polynomial_model,
                                  quadratic_model, reciprocal_characteristic,
                                  reciprocal_characteristic_via_generator,
                                  reciprocal_potential, sine_model, zero_model)

GRID = np.linspace(-2.0, 2.0, 41).reshape(-1, 1)


def test_quadratic_model_closed_forms():
    m = quadratic_model(a=2.0)
    z = np.array([[0.5], [-1.0]])
    np.testing.assert_allclose(m.U(0.0, z), 0.5 * 2.0 * z[:, 0] ** 2)
    np.testing.assert_allclose(m.grad_U(0.0, z), 2.0 * z)
    np.testing.assert_allclose(m.laplacian_U(0.0, z), [2.0, 2.0])
    np.testing.assert_allclose(m.dt_U(0.0, z), [0.0, 0.0])


def test_quadratic_curvature_field_is_shifted_parabola():
    # for U = a z^2 / 2 the field is a^2 z^2 / 2 - a/2
    a = 1.7
    m = quadratic_model(a)
    vals = reciprocal_potential(m, 0.0, GRID)
    np.testing.assert_allclose(
        vals, 0.5 * a ** 2 * GRID[:, 0] ** 2 - 0.5 * a, rtol=1e-12)


def test_linear_shift_moves_curvature_minimum_only():
    # adding a linear term to U translates the curvature parabola: bridges
    # of the shifted model are translates of the centred ones
    # shift=s adds the linear term s*z, so the curvature parabola of
    # U = z^2/2 + s z sits at -s with unchanged curvature
    m = quadratic_model(1.0, shift=0.3)
    vals = reciprocal_potential(m, 0.0, GRID)
    np.testing.assert_allclose(
        vals, 0.5 * (GRID[:, 0] + 0.3) ** 2 - 0.5, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("model", [quadratic_model(1.0),
                                   quadratic_model(2.0, shift=-0.4),
                                   sine_model(0.2)],
                         ids=["quadratic", "shifted", "sine"])
def test_characteristic_routes_agree_closed_vs_generator(model):
    direct = reciprocal_characteristic(model, 0.0, GRID)
    generator = reciprocal_characteristic_via_generator(model, 0.0, GRID)
    assert float(np.max(np.abs(direct - generator))) < 1e-6


@pytest.mark.parametrize("model", [quadratic_model(1.0), sine_model(0.2)],
                         ids=["quadratic", "sine"])
def test_characteristic_survives_derivative_free_rebuild(model):
    rebuilt = from_callable(model.U, d=1)
    direct = reciprocal_characteristic(model, 0.0, GRID)
    fd = reciprocal_characteristic(rebuilt, 0.0, GRID)
    assert float(np.max(np.abs(direct - fd))) < 1e-3


def test_constant_offset_leaves_characteristic_unchanged():
    m = quadratic_model(1.0)
    shifted = m.with_offset(3.7)
    direct = reciprocal_characteristic(m, 0.0, GRID)
    offset = reciprocal_characteristic_via_generator(
        from_callable(shifted.U, d=1), 0.0, GRID)
    assert float(np.max(np.abs(direct - offset))) < 1e-3


def test_polynomial_model_derivatives_match_polyder():
    coeffs = [0.1, -0.3, 0.0, 0.5, 0.2]  # ascending powers
    m = polynomial_model(coeffs)
    poly = np.polynomial.Polynomial(coeffs)
    z = GRID
    np.testing.assert_allclose(m.U(0.0, z), poly(z[:, 0]), rtol=1e-12)
    np.testing.assert_allclose(m.grad_U(0.0, z)[:, 0], poly.deriv()(z[:, 0]),
                               rtol=1e-12)
    np.testing.assert_allclose(m.laplacian_U(0.0, z),
                               poly.deriv(2)(z[:, 0]), rtol=1e-12)


def test_sine_model_is_bounded_with_declared_gradient_sup():
    m = sine_model(0.2)
    assert m.grad_script_U_sup is not None
    fine = np.linspace(-np.pi, np.pi, 20001).reshape(-1, 1)
    sup = float(np.max(np.abs(reciprocal_characteristic(m, 0.0, fine))))
    assert sup <= m.grad_script_U_sup + 1e-9


def test_zero_model_has_flat_curvature():
    m = zero_model()
    np.testing.assert_allclose(reciprocal_potential(m, 0.0, GRID), 0.0)
    np.testing.assert_allclose(reciprocal_characteristic(m, 0.0, GRID), 0.0)


def test_make_potential_dispatch_and_unknown_kind():
    m = make_potential("quadratic", a=2.0)
    assert m.kind == "quadratic"
    assert m.params["a"] == 2.0
    with pytest.raises(Exception):
        make_potential("nonsense")


def test_convexity_certificate_quadratic():
    cert = convexity_certificate(quadratic_model(1.0), [(-10.0, 10.0)],
                                 resolution=8)
    # curvature of the z^2/2 - 1/2 field is exactly one
    assert cert.alpha_hat == pytest.approx(1.0, abs=1e-6)
    assert cert.min_eigenvalue == pytest.approx(1.0, abs=1e-6)


def test_from_callable_matches_analytic_derivatives():
    m = from_callable(lambda t, z: 0.25 * z[..., 0] ** 4, d=1)
    z = np.array([[0.7], [-1.2]])
    np.testing.assert_allclose(m.grad_U(0.0, z)[:, 0], z[:, 0] ** 3,
                               rtol=1e-5, atol=1e-6)
    np.testing.assert_allclose(m.laplacian_U(0.0, z), 3.0 * z[:, 0] ** 2,
                               rtol=1e-4, atol=1e-4)
