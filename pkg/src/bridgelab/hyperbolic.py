"""Overflow-safe hyperbolic ratios.

The two-sided pinning coefficients used throughout are ratios of hyperbolic
sines like sinh(a(T-t))/sinh(2aT).  Evaluated naively these overflow for
a*T beyond ~350, while the ratios themselves stay in [0, 1].  Everything here
works in log space:

    log sinh(u) = u + log(1 - exp(-2u)) - log 2       (u > 0)

so ratios are exp(log sinh(a) - log sinh(b)) with no large intermediates.
"""

import numpy as np

_LOG2 = np.log(2.0)


def log_sinh(u):
    """log(sinh(u)) for u > 0, stable for both tiny and huge arguments."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise ValueError("log_sinh requires u > 0")
    return u + np.log1p(-np.exp(-2.0 * u)) - _LOG2


def sinh_ratio(a, b):
    """sinh(a)/sinh(b) for a >= 0, b > 0 without overflow."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(b <= 0):
        raise ValueError("sinh_ratio requires b > 0")
    a_safe = np.where(a > 0, a, 1.0)
    out = np.exp(log_sinh(a_safe) - log_sinh(b))
    return np.where(a > 0, out, 0.0)


def coth(u):
    """coth(u) for u != 0; saturates to +-1 for large |u|."""
    u = np.asarray(u, dtype=float)
    if np.any(u == 0):
        raise ValueError("coth(0) is undefined")
    return 1.0 / np.tanh(u)


def csch(u):
    """1/sinh(u) for u > 0; underflows gracefully to 0 for large u."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise ValueError("csch requires u > 0")
    # 2 e^{-u} / (1 - e^{-2u}); both factors are representable for all u > 0.
    return 2.0 * np.exp(-u) / (-np.expm1(-2.0 * u))


def sech_ratio(a, b):
    """cosh(a)/cosh(b) without overflow (a, b >= 0)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    # log cosh(u) = u + log1p(exp(-2u)) - log 2 is stable for u >= 0.
    log_cosh_a = a + np.log1p(np.exp(-2.0 * a)) - _LOG2
    log_cosh_b = b + np.log1p(np.exp(-2.0 * b)) - _LOG2
    return np.exp(log_cosh_a - log_cosh_b)
