"""Synchronous couplings of pinned diffusions and what they certify.

Driving two bridges with the same Brownian increments makes their difference
tractable.  For OU bridges with rate alpha on [-T, T], endpoint shifts
(dx, dy) move the time-t marginal by the envelope

    sinh(alpha (T-t))/sinh(2 alpha T) * dx
      + sinh(alpha (T+t))/sinh(2 alpha T) * dy,

and the coupled difference must track it up to Euler error.  The same
coefficients bound derivatives of endpoint-to-interior expectations of
smooth observables.  In one dimension, an ordering of the curvature-field
slopes of two models upgrades the shared-noise coupling to a pathwise
ordering of the bridges.

All statistical checks here are about a discretised SDE, so inequalities
carry a c*sqrt(dt) slack: Euler-Maruyama strong error is O(sqrt(dt)) and
the almost-sure statements cannot hold exactly on a grid.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bridges import (BridgeProblem, DiscretizedPath, _fk_grad_log_psi,
                      exact_drift_for, simulate_bridge_batch, time_grid)
from .errors import PreconditionError
from .hyperbolic import sinh_ratio
from .mcengine import stream
from .potentials import (PotentialModel, convexity_certificate,
                         reciprocal_characteristic)

DEFAULT_SLACK_CONSTANT = 5.0


def envelope_coefficients(alpha: float, T: float, t):
    """(start, end) response coefficients of the pinned-OU marginal at t."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > T):
        raise ValueError("need |t| <= T")
    c_start = sinh_ratio(alpha * (T - t), 2.0 * alpha * T)
    c_end = sinh_ratio(alpha * (T + t), 2.0 * alpha * T)
    return c_start, c_end


def coupling_bound_envelope(alpha: float, T: float, t, dx: float, dy: float):
    """Envelope value at time t for endpoint separations dx = |x2-x1|,
    dy = |y2-y1|."""
    c_start, c_end = envelope_coefficients(alpha, T, t)
    return c_start * float(dx) + c_end * float(dy)


@dataclass(frozen=True)
class CoupledPaths:
    """Two bridge paths on one grid, driven by identical increments."""

    path_1: DiscretizedPath
    path_2: DiscretizedPath
    shared_seed: int

    def __post_init__(self):
        if not np.array_equal(self.path_1.times, self.path_2.times):
            raise ValueError("coupled paths must share the time grid")


def _resolve_drift(problem: BridgeProblem, drift_mode, delta: float,
                   inner_budget: int, inner_steps: int, fk_h: float,
                   fk_rng) -> Callable:
    """Return a (t, Z, tau) -> (m, d) drift for one leg of a coupling."""
    T, model, y = problem.T, problem.model, problem.y
    if callable(drift_mode):
        return drift_mode
    if drift_mode == "brownian":
        return lambda t, Z, tau: (y - Z) / tau
    if drift_mode == "exact_ou":
        drift = exact_drift_for(model, y, T)
        if drift is None:
            raise PreconditionError(
                f"no closed-form drift for model kind {model.kind!r}")
        return drift
    if drift_mode == "feynman_kac":
        def drift(t, Z, tau):
            pin = (y - Z) / tau
            if T - t <= 2.0 * delta:
                return pin
            return pin + _fk_grad_log_psi(model, t, Z, T, y, inner_budget,
                                          inner_steps, fk_h, fk_rng)
        return drift
    raise ValueError(f"unknown drift mode {drift_mode!r}")


def _couple_batch(problem_1: BridgeProblem, problem_2: BridgeProblem,
                  n_steps: int, seed: int, drift_mode="exact_ou",
                  n_paths: int = 1, inner_budget: int = 128,
                  inner_steps: int = 16, fk_h: float = 1e-3):
    """Shared-noise Euler integration of two bridge problems.

    Returns (positions_1, positions_2), each (n_paths, n_steps+1, d).
    Feynman-Kac legs consume their own deterministic inner streams, so the
    outer increments stay identical across the pair.
    """
    if problem_1.T != problem_2.T or problem_1.d != problem_2.d:
        raise ValueError("problems must share horizon and dimension")
    T, d = problem_1.T, problem_1.d
    if n_steps < 2:
        raise ValueError("n_steps must be >= 2")
    delta = 2.0 * T / n_steps

    drift_1, drift_2 = (
        _resolve_drift(problem, drift_mode, delta, inner_budget, inner_steps,
                       fk_h, stream(seed, 1000 + tag))
        for tag, problem in ((1, problem_1), (2, problem_2)))

    rng = stream(seed, 0)
    Z1 = np.broadcast_to(problem_1.x, (n_paths, d)).astype(float).copy()
    Z2 = np.broadcast_to(problem_2.x, (n_paths, d)).astype(float).copy()
    out_1 = np.empty((n_paths, n_steps + 1, d))
    out_2 = np.empty((n_paths, n_steps + 1, d))
    out_1[:, 0], out_2[:, 0] = Z1, Z2
    sqdt = np.sqrt(delta)
    for j in range(n_steps):
        t_j = -T + j * delta
        tau = max(T - t_j, delta)
        eps = rng.standard_normal((n_paths, d))
        Z1 = Z1 + drift_1(t_j, Z1, tau) * delta + sqdt * eps
        Z2 = Z2 + drift_2(t_j, Z2, tau) * delta + sqdt * eps
        out_1[:, j + 1], out_2[:, j + 1] = Z1, Z2
    out_1[:, -1] = np.broadcast_to(problem_1.y, (n_paths, d))
    out_2[:, -1] = np.broadcast_to(problem_2.y, (n_paths, d))
    return out_1, out_2


def couple_synchronous(problem_1: BridgeProblem, problem_2: BridgeProblem,
                       n_steps: int, seed: int, drift_mode="exact_ou",
                       **kwargs) -> CoupledPaths:
    """One pair of bridge paths driven by the same Brownian increments."""
    pos_1, pos_2 = _couple_batch(problem_1, problem_2, n_steps, seed,
                                 drift_mode=drift_mode, n_paths=1, **kwargs)
    times = time_grid(problem_1.T, n_steps)
    return CoupledPaths(path_1=DiscretizedPath(times=times, positions=pos_1[0]),
                        path_2=DiscretizedPath(times=times, positions=pos_2[0]),
                        shared_seed=seed)


@dataclass(frozen=True)
class EnvelopeReport:
    """Worst-case coupled difference against the envelope plus slack."""

    times: np.ndarray
    max_difference: np.ndarray
    envelope: np.ndarray
    slack: float
    rel_tol: float
    violation_count: int
    n_checked: int

    @property
    def frac_violating(self) -> float:
        return self.violation_count / self.n_checked

    @property
    def max_excess(self) -> float:
        return float(np.max(self.max_difference
                            - self.envelope * (1.0 + self.rel_tol)
                            - self.slack))

    @property
    def passed(self) -> bool:
        return self.violation_count == 0


def envelope_report(model: PotentialModel, T: float, x1, y1, x2, y2,
                    n_steps: int = 2000, seed: int = 0, n_paths: int = 1000,
                    slack_constant: float = DEFAULT_SLACK_CONSTANT,
                    rel_tol: float = 0.0) -> EnvelopeReport:
    """Couple two same-model OU bridges differing only in endpoints and count
    (path, time) points where |Z2 - Z1| exceeds envelope*(1+rel_tol) + slack,
    slack = slack_constant * sqrt(dt).
    """
    if model.kind not in ("quadratic", "quadratic_shifted"):
        raise PreconditionError("envelope_report needs a quadratic model")
    alpha = float(model.params["a"])
    if alpha <= 0:
        raise PreconditionError("envelope_report needs curvature a > 0")
    p1 = BridgeProblem(x=x1, y=y1, T=T, model=model)
    p2 = BridgeProblem(x=x2, y=y2, T=T, model=model)
    pos_1, pos_2 = _couple_batch(p1, p2, n_steps, seed, drift_mode="exact_ou",
                                 n_paths=n_paths)
    times = time_grid(T, n_steps)
    diff = np.linalg.norm(pos_2 - pos_1, axis=-1)          # (m, n+1)
    dx = float(np.linalg.norm(p2.x - p1.x))
    dy = float(np.linalg.norm(p2.y - p1.y))
    env = coupling_bound_envelope(alpha, T, times, dx, dy)
    slack = slack_constant * np.sqrt(2.0 * T / n_steps)
    threshold = env[None, :] * (1.0 + rel_tol) + slack
    violations = int(np.count_nonzero(diff > threshold))
    return EnvelopeReport(times=times, max_difference=diff.max(axis=0),
                          envelope=env, slack=float(slack), rel_tol=rel_tol,
                          violation_count=violations, n_checked=diff.size)


@dataclass(frozen=True)
class GradientCheck:
    """One-sided check of |d/dx E f(X_t)| against coefficient * E|grad f|."""

    lhs: float
    rhs: float
    std_error: float
    coefficient: float
    perturb: str
    n_sigma: float

    @property
    def passed(self) -> bool:
        return self.lhs - self.rhs <= self.n_sigma * self.std_error


def verify_gradient_estimate(problem: BridgeProblem, f: Callable,
                             grad_f: Callable, t: float,
                             perturb: str = "initial", h: float = 1e-3,
                             budget: int = 4096, seed: int = 0,
                             n_steps: int = 2000,
                             n_sigma: float = 3.0) -> GradientCheck:
    """Estimate |d E f(X_t)/d endpoint| with common random numbers and compare
    one-sidedly against the sinh-ratio coefficient times E|grad f(X_t)|.

    perturb selects which pin moves: 'initial' (x, coefficient
    sinh(a(T-t))/sinh(2aT)) or 'final' (y, the T+t mirror).  The model must
    certify convexity; simulation uses the exact OU drift, so the model must
    be quadratic.
    """
    model = problem.model
    if perturb not in ("initial", "final"):
        raise ValueError("perturb must be 'initial' or 'final'")
    if model.kind not in ("quadratic", "quadratic_shifted"):
        raise PreconditionError(
            "gradient check simulates with the exact OU drift; "
            "needs a quadratic model")
    reach = 1.0 + float(np.max(np.abs(np.concatenate([problem.x, problem.y]))))
    region = [(-reach, reach)] * problem.d
    cert = convexity_certificate(model, region, resolution=8)
    if not cert.positive:
        raise PreconditionError(
            f"convexity certificate failed (min eigenvalue {cert.min_eigenvalue:.3g})")
    alpha = float(model.params["a"])

    T = problem.T
    delta = 2.0 * T / n_steps
    j_t = int(round((t + T) / delta))
    if not 0 <= j_t <= n_steps:
        raise ValueError("t outside the horizon")
    direction = np.zeros(problem.d)
    direction[0] = 1.0

    marg = {}
    for sign in (+1.0, -1.0):
        endpoint_kw = {}
        if perturb == "initial":
            endpoint_kw["x"] = problem.x + sign * h * direction
        else:
            endpoint_kw["y"] = problem.y + sign * h * direction
        pos = simulate_bridge_batch(problem, n_steps, seed,
                                    drift_mode="exact_ou", alpha=alpha,
                                    n_paths=budget, **endpoint_kw)
        marg[sign] = pos[:, j_t, :]
    per_path_deriv = (f(marg[1.0]) - f(marg[-1.0])) / (2.0 * h)
    grad_mag = 0.5 * (np.linalg.norm(grad_f(marg[1.0]), axis=-1)
                      + np.linalg.norm(grad_f(marg[-1.0]), axis=-1))

    c_start, c_end = envelope_coefficients(alpha, T, t)
    coeff = float(c_start if perturb == "initial" else c_end)
    sign_lhs = 1.0 if per_path_deriv.mean() >= 0 else -1.0
    gap = sign_lhs * per_path_deriv - coeff * grad_mag
    lhs = abs(float(per_path_deriv.mean()))
    rhs = coeff * float(grad_mag.mean())
    se = float(gap.std(ddof=1) / np.sqrt(budget))
    return GradientCheck(lhs=lhs, rhs=rhs, std_error=se, coefficient=coeff,
                         perturb=perturb, n_sigma=n_sigma)


@dataclass(frozen=True)
class ComparisonReport:
    """Pathwise ordering of two coupled one-dimensional bridges."""

    gate_margin: float
    slack: float
    violation_count: int
    n_checked: int
    min_gap: float
    sample: CoupledPaths

    @property
    def frac_violating(self) -> float:
        return self.violation_count / self.n_checked

    @property
    def passed(self) -> bool:
        return self.frac_violating <= 1e-3


def couple_comparison_1d(model_1: PotentialModel, model_2: PotentialModel,
                         x: float, y: float, T: float, n_steps: int = 2000,
                         seed: int = 0, region=(-3.0, 3.0),
                         n_paths: int = 1000,
                         slack_constant: float | None = None,
                         drift_mode="exact_ou") -> ComparisonReport:
    """Order two 1-d bridges sharing endpoints and noise.

    Gate: the curvature-field slope of model_1 must dominate that of
    model_2 on a grid over `region` (script_U_1' >= script_U_2'); a
    violation refuses with the offending point.  Under the gate the
    model_2 path should run above the model_1 path; the report counts
    (path, time) points with X2 < X1 - slack, slack = c sqrt(dt) with
    c defaulting to 5 (1 + |x| + |y|).
    """
    if model_1.d != 1 or model_2.d != 1:
        raise PreconditionError("comparison coupling is one-dimensional")
    zg = np.linspace(region[0], region[1], 201).reshape(-1, 1)
    char_1 = reciprocal_characteristic(model_1, 0.0, zg)[:, 0]
    char_2 = reciprocal_characteristic(model_2, 0.0, zg)[:, 0]
    margins = char_1 - char_2
    worst = int(np.argmin(margins))
    gate_margin = float(margins[worst])
    if gate_margin < -1e-9:
        raise PreconditionError(
            "curvature-slope ordering fails at z = "
            f"{zg[worst, 0]:.4g} (margin {gate_margin:.3g})")

    p1 = BridgeProblem(x=[x], y=[y], T=T, model=model_1)
    p2 = BridgeProblem(x=[x], y=[y], T=T, model=model_2)
    pos_1, pos_2 = _couple_batch(p1, p2, n_steps, seed,
                                 drift_mode=drift_mode, n_paths=n_paths)
    gap = (pos_2 - pos_1)[:, :, 0]
    if slack_constant is None:
        slack_constant = DEFAULT_SLACK_CONSTANT * (1.0 + abs(x) + abs(y))
    slack = float(slack_constant * np.sqrt(2.0 * T / n_steps))
    violations = int(np.count_nonzero(gap < -slack))
    times = time_grid(T, n_steps)
    sample = CoupledPaths(
        path_1=DiscretizedPath(times=times, positions=pos_1[0]),
        path_2=DiscretizedPath(times=times, positions=pos_2[0]),
        shared_seed=seed)
    return ComparisonReport(gate_margin=gate_margin, slack=slack,
                            violation_count=violations, n_checked=gap.size,
                            min_gap=float(gap.min()), sample=sample)
