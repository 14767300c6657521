"""Pinned diffusions: drifts, path weights, and simulation.

A bridge problem pins the dynamics dX = -grad U dt + dB on [-T, T] at
X_{-T} = x and X_T = y.  Its drift splits into the universal pinning term
plus a correction that only sees the curvature field script_U:

    b(t, z) = (y - z)/(T - t) + grad_z log psi(t, z),
    psi(t, z) = E[ exp( - int_t^T script_U(s, w_s) ds ) ],

the expectation over Brownian bridges w from (t, z) to (T, y).  With an
Ornstein-Uhlenbeck base bridge instead, script_U is replaced by
script_U - (alpha^2/2)|z|^2 and the pinning term by the closed-form
OU bridge drift

    -alpha [ coth(alpha (T-t)) z - y / sinh(alpha (T-t)) ].

Monte Carlo families are sampled with exact Gaussian conditionals (no time
discretisation error at the grid nodes); the SDE itself is integrated by
Euler-Maruyama.  Perturbing the running point z shifts the base bridge by a
deterministic profile, which makes common-random-number gradients of log psi
cheap and low-variance.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.signal import lfilter

from .errors import SimulationError
from .hyperbolic import coth, csch, log_sinh, sinh_ratio
from .mcengine import stream
from .potentials import PotentialModel, reciprocal_potential

DEFAULT_N_STEPS = 2000          # for horizons T <= 1
DEFAULT_INNER_BUDGET = 10_000   # base-bridge samples per psi estimate


def time_grid(T: float, n_steps: int) -> np.ndarray:
    """Uniform nodes of [-T, T] with n_steps intervals."""
    if T <= 0 or n_steps < 1:
        raise ValueError("need T > 0 and n_steps >= 1")
    return -T + (2.0 * T / n_steps) * np.arange(n_steps + 1)


@dataclass(frozen=True)
class BridgeProblem:
    """Endpoints, horizon and model of one pinned diffusion."""

    x: np.ndarray
    y: np.ndarray
    T: float
    model: PotentialModel

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if x.shape != (self.model.d,) or y.shape != (self.model.d,):
            raise ValueError("endpoints must be d-vectors")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("endpoints must be finite")
        if not (self.T > 0 and np.isfinite(self.T)):
            raise ValueError("horizon T must be positive and finite")

    @property
    def d(self) -> int:
        return self.model.d


@dataclass(frozen=True)
class DiscretizedPath:
    """A path on the uniform grid of [-T, T] with pinned endpoints."""

    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.positions, dtype=float)
        if t.ndim != 1 or p.ndim != 2 or p.shape[0] != t.shape[0]:
            raise ValueError("need times (n+1,) and positions (n+1, d)")
        dt = np.diff(t)
        if t.shape[0] < 2 or np.any(dt <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.allclose(dt, dt[0], rtol=1e-9, atol=1e-12):
            raise ValueError("times must be uniformly spaced")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", p)

    @property
    def n_steps(self) -> int:
        return self.times.shape[0] - 1

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


@dataclass(frozen=True)
class PsiEstimate:
    """Monte Carlo estimate of the exponential path weight psi."""

    value: float
    std_error: float
    inner_budget: int
    base: str
    n_rejected: int = 0

    @property
    def valid(self) -> bool:
        return self.n_rejected == 0 and np.isfinite(self.value)


@dataclass(frozen=True)
class DriftEstimate:
    """A bridge-drift value with per-component standard errors."""

    value: np.ndarray
    std_error: np.ndarray
    base: str


# ---------------------------------------------------------------------------
# Closed-form drifts and pinned-OU marginal facts
# ---------------------------------------------------------------------------

def brownian_bridge_drift(z, t: float, y, T: float) -> np.ndarray:
    """(y - z)/(T - t); defined for t < T."""
    if t >= T:
        raise ValueError("brownian_bridge_drift needs t < T")
    return (np.asarray(y, float) - np.asarray(z, float)) / (T - t)


def _ou_drift_tau(alpha: float, z, tau, y) -> np.ndarray:
    return -alpha * (coth(alpha * tau) * np.asarray(z, float)
                     - csch(alpha * tau) * np.asarray(y, float))


def ou_bridge_drift(alpha: float, z, t: float, y, T: float) -> np.ndarray:
    """-alpha [ coth(a(T-t)) z - y / sinh(a(T-t)) ], overflow-safe.

    For large a(T-t) this limits to -alpha z: the pin stops mattering.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if t >= T:
        raise ValueError("ou_bridge_drift needs t < T")
    return _ou_drift_tau(alpha, z, T - t, y)


def translation_coefficient(alpha: float, T: float, t) -> np.ndarray:
    """sinh(a(T-t))/sinh(2aT): response of the pinned-OU path at time t to a
    shift of the initial point (the final-point response swaps T-t -> T+t)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return sinh_ratio(alpha * (T - np.asarray(t, float)), 2.0 * alpha * T)


def ou_bridge_mean(alpha: float, x, y, T: float, t) -> np.ndarray:
    """Mean of the pinned-OU marginal at time t on [-T, T].

    alpha = 0 falls back to the Brownian bridge line between the pins.
    """
    t = np.asarray(t, dtype=float)
    if alpha == 0.0:
        cx = (T - t) / (2.0 * T)
        cy = (T + t) / (2.0 * T)
    else:
        cx = sinh_ratio(alpha * (T - t), 2.0 * alpha * T)
        cy = sinh_ratio(alpha * (T + t), 2.0 * alpha * T)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    return cx[..., None] * x + cy[..., None] * y if x.ndim else cx * x + cy * y


def ou_bridge_variance(alpha: float, T: float, t) -> np.ndarray:
    """Per-coordinate variance sinh(a(T-t)) sinh(a(T+t)) / (a sinh(2aT)).

    alpha = 0 falls back to the Brownian bridge value (T-t)(T+t)/(2T).
    """
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > T):
        raise ValueError("|t| must be <= T")
    if alpha == 0.0:
        return (T - t) * (T + t) / (2.0 * T)
    edge = np.abs(t) >= T
    t_safe = np.where(edge, 0.0, t)
    out = np.exp(log_sinh(alpha * (T - t_safe)) + log_sinh(alpha * (T + t_safe))
                 - log_sinh(2.0 * alpha * T)) / alpha
    return np.where(edge, 0.0, out)


# ---------------------------------------------------------------------------
# Exact pinned Gaussian sampling
# ---------------------------------------------------------------------------

def pinned_fluctuations(alpha: float, t0: float, T: float, n_steps: int,
                        n_paths: int, d: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Centred bridge (0 at t0, 0 at T) sampled exactly at the grid nodes.

    alpha = 0 gives the Brownian bridge; alpha > 0 the OU bridge, built from
    an exact AR(1) recursion followed by the linear endpoint correction
    Y_s = X_s - (sinh(a(s-t0))/sinh(a(T-t0))) X_T.
    Returns (n_paths, n_steps+1, d).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    span = T - t0
    if span <= 0:
        raise ValueError("need t0 < T")
    delta = span / n_steps
    s_rel = np.linspace(0.0, span, n_steps + 1)

    if alpha == 0.0:
        steps = rng.standard_normal((n_paths, n_steps, d)) * np.sqrt(delta)
        walk = np.concatenate([np.zeros((n_paths, 1, d)), np.cumsum(steps, axis=1)],
                              axis=1)
        weight = (s_rel / span)[None, :, None]
        return walk - weight * walk[:, -1:, :]

    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    c = np.exp(-alpha * delta)
    step_var = -np.expm1(-2.0 * alpha * delta) / (2.0 * alpha)
    noise = rng.standard_normal((n_paths, n_steps, d)) * np.sqrt(step_var)
    ar = lfilter([1.0], [1.0, -c], noise, axis=1)
    walk = np.concatenate([np.zeros((n_paths, 1, d)), ar], axis=1)
    weight = sinh_ratio(alpha * s_rel, alpha * span)[None, :, None]
    return walk - weight * walk[:, -1:, :]


def bridge_mean_profile(alpha: float, t0: float, z, T: float, y,
                        s_grid: np.ndarray) -> np.ndarray:
    """Mean of the base bridge from (t0, z) to (T, y) at times s_grid.

    z, y may be (d,) or (m, d); result broadcasts to (m, len(s), d).
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    span = T - t0
    rel = (s_grid - t0) / span
    if alpha == 0.0:
        wz = (1.0 - rel)[:, None]
        wy = rel[:, None]
    else:
        wz = start_shift_profile(alpha, t0, T, s_grid)[:, None]
        wy = sinh_ratio(alpha * np.maximum(s_grid - t0, 0.0), alpha * span)[:, None]
    if z.ndim == 1 and y.ndim == 1:
        return wz * z[None, :] + wy * y[None, :]
    z2d = np.atleast_2d(z)
    y2d = np.atleast_2d(y)
    return wz[None] * z2d[:, None, :] + wy[None] * y2d[:, None, :]


def start_shift_profile(alpha: float, t0: float, T: float,
                        s_grid: np.ndarray) -> np.ndarray:
    """d(mean)/d(start): (T-s)/(T-t0) for Brownian, sinh ratio for OU."""
    span = T - t0
    if alpha == 0.0:
        return (T - s_grid) / span
    return sinh_ratio(alpha * np.maximum(T - s_grid, 0.0), alpha * span)


# ---------------------------------------------------------------------------
# Exponential path weight psi and drift from it
# ---------------------------------------------------------------------------

def _psi_integrand(model: PotentialModel, base: str, alpha, s_grid, paths):
    """script_U(s, w_s), minus the OU compensation when an OU base is used."""
    vals = reciprocal_potential(model, s_grid[None, :], paths)
    if base == "ou":
        vals = vals - 0.5 * alpha * alpha * np.sum(paths * paths, axis=-1)
    return vals


def _base_label(base: str, alpha) -> str:
    return "brownian" if base == "brownian" else f"ou({alpha:g})"


def estimate_psi(problem: BridgeProblem, t: float, z, base: str = "brownian",
                 alpha: float | None = None,
                 inner_budget: int = DEFAULT_INNER_BUDGET, seed: int = 0,
                 n_steps: int = 256,
                 rng: np.random.Generator | None = None) -> PsiEstimate:
    """Monte Carlo psi(t, z) against a Brownian or OU base bridge.

    Paths with a non-finite integrand are dropped and counted; an estimate
    with rejections is flagged invalid.  Raises if every path is rejected.
    """
    if base not in ("brownian", "ou"):
        raise ValueError("base must be 'brownian' or 'ou'")
    if base == "ou":
        if alpha is None or alpha <= 0:
            raise ValueError("ou base needs alpha > 0")
        fluct_alpha = float(alpha)
    else:
        fluct_alpha = 0.0
    if not -problem.T <= t < problem.T:
        raise ValueError("need -T <= t < T")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if rng is None:
        rng = stream(seed, 0)

    T = problem.T
    s_grid = np.linspace(t, T, n_steps + 1)
    fluct = pinned_fluctuations(fluct_alpha, t, T, n_steps, inner_budget,
                                problem.d, rng)
    paths = fluct + bridge_mean_profile(fluct_alpha, t, z, T, problem.y, s_grid)
    integrand = _psi_integrand(problem.model, base, alpha, s_grid, paths)
    log_weights = -np.trapezoid(integrand, s_grid, axis=1)
    ok = np.isfinite(log_weights)
    n_rejected = int(inner_budget - np.count_nonzero(ok))
    if n_rejected == inner_budget:
        raise SimulationError("all base paths produced a non-finite weight")
    w = np.exp(log_weights[ok])
    value = float(w.mean())
    se = float(w.std(ddof=1) / np.sqrt(w.size)) if w.size > 1 else 0.0
    return PsiEstimate(value=value, std_error=se, inner_budget=inner_budget,
                       base=_base_label(base, alpha), n_rejected=n_rejected)


def bridge_drift_estimate(problem: BridgeProblem, t: float, z,
                          inner_budget: int = DEFAULT_INNER_BUDGET,
                          seed: int = 0, base: str = "brownian",
                          alpha: float | None = None, n_steps: int = 256,
                          h: float | None = None,
                          n_batches: int = 25) -> DriftEstimate:
    """Bridge drift at (t, z): pinning term + grad log psi.

    The gradient uses central differences with common random numbers: the
    same base-bridge fluctuations serve z + h e_i and z - h e_i, only the
    deterministic mean profile moves.  Standard errors come from batch means.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if base == "ou" and (alpha is None or alpha <= 0):
        raise ValueError("ou base needs alpha > 0")
    fluct_alpha = float(alpha) if base == "ou" else 0.0
    if h is None:
        h = problem.model.h_fd * (1.0 + float(np.linalg.norm(z)))
    rng = stream(seed, 0)
    T, d = problem.T, problem.d
    s_grid = np.linspace(t, T, n_steps + 1)
    fluct = pinned_fluctuations(fluct_alpha, t, T, n_steps, inner_budget, d, rng)
    shift = start_shift_profile(fluct_alpha, t, T, s_grid)[None, :, None]

    base_mean = bridge_mean_profile(fluct_alpha, t, z, T, problem.y, s_grid)
    batches = np.array_split(np.arange(inner_budget), n_batches)

    grad = np.empty(d)
    grad_se = np.empty(d)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = 1.0
        bump = h * shift * ei[None, None, :]
        w_plus = np.exp(-np.trapezoid(
            _psi_integrand(problem.model, base, alpha, s_grid,
                           fluct + base_mean + bump), s_grid, axis=1))
        w_minus = np.exp(-np.trapezoid(
            _psi_integrand(problem.model, base, alpha, s_grid,
                           fluct + base_mean - bump), s_grid, axis=1))
        if not (np.all(np.isfinite(w_plus)) and np.all(np.isfinite(w_minus))):
            raise SimulationError("non-finite weight in drift estimate")
        grad[i] = (np.log(w_plus.mean()) - np.log(w_minus.mean())) / (2.0 * h)
        per_batch = np.array([
            (np.log(w_plus[b].mean()) - np.log(w_minus[b].mean())) / (2.0 * h)
            for b in batches])
        grad_se[i] = per_batch.std(ddof=1) / np.sqrt(len(batches))

    if base == "brownian":
        pinning = brownian_bridge_drift(z, t, problem.y, T)
    else:
        pinning = ou_bridge_drift(alpha, z, t, problem.y, T)
    return DriftEstimate(value=pinning + grad, std_error=grad_se,
                         base=_base_label(base, alpha))


# ---------------------------------------------------------------------------
# Euler-Maruyama simulation
# ---------------------------------------------------------------------------

def exact_drift_for(model: PotentialModel, y, T: float) -> Optional[Callable]:
    """Closed-form bridge drift callable (t, Z) -> drift, when one exists.

    Quadratic models give the OU bridge drift (shifted coordinates absorb a
    linear term); the zero model gives the Brownian pinning drift.
    Returns None when no closed form is known.
    """
    y = np.asarray(y, dtype=float)
    if model.kind == "zero":
        def drift(t, Z, tau):
            return (y - Z) / tau
        return drift
    if model.kind in ("quadratic", "quadratic_shifted"):
        a = float(model.params["a"])
        if a == 0.0:
            # constant drift cancels against the pinning correction
            def drift(t, Z, tau):
                return (y - Z) / tau
            return drift
        offset = (np.asarray(model.params.get("shift", np.zeros(model.d)),
                             dtype=float) / a)

        def drift(t, Z, tau):
            return _ou_drift_tau(a, Z + offset, tau, y + offset)
        return drift
    return None


def _fk_grad_log_psi(model: PotentialModel, t: float, Z: np.ndarray, T: float,
                     y: np.ndarray, inner_budget: int, inner_steps: int,
                     h: float, rng: np.random.Generator) -> np.ndarray:
    """Batched grad_z log psi(t, Z_k) for every row of Z, Brownian base.

    Each outer path gets its own base-bridge noise; the two central-difference
    evaluations share it.  Z is (m, d); y is (d,) or (m, d).
    """
    m, d = Z.shape
    s_grid = np.linspace(t, T, inner_steps + 1)
    shift = start_shift_profile(0.0, t, T, s_grid)
    grad = np.empty((m, d))
    block = max(1, int(4_000_000 // max(inner_budget * (inner_steps + 1), 1)))
    for lo in range(0, m, block):
        hi = min(lo + block, m)
        mb = hi - lo
        fluct = pinned_fluctuations(0.0, t, T, inner_steps, mb * inner_budget,
                                    d, rng).reshape(mb, inner_budget,
                                                    inner_steps + 1, d)
        y_blk = y if y.ndim == 1 else y[lo:hi]
        mean = bridge_mean_profile(0.0, t, Z[lo:hi], T, y_blk, s_grid)
        base_paths = fluct + mean[:, None, :, :]
        for i in range(d):
            bump = (h * shift)[None, None, :, None] * np.eye(d)[i][None, None, None, :]
            up = reciprocal_potential(model, s_grid[None, None, :],
                                      base_paths + bump)
            dn = reciprocal_potential(model, s_grid[None, None, :],
                                      base_paths - bump)
            w_up = np.exp(-np.trapezoid(up, s_grid, axis=2))
            w_dn = np.exp(-np.trapezoid(dn, s_grid, axis=2))
            ok = np.isfinite(w_up) & np.isfinite(w_dn)
            if not np.all(np.any(ok, axis=1)):
                raise SimulationError(
                    "every base path rejected for some state in the batch")
            w_up = np.where(ok, w_up, 0.0)
            w_dn = np.where(ok, w_dn, 0.0)
            n_ok = np.count_nonzero(ok, axis=1)
            p_up = w_up.sum(axis=1) / n_ok
            p_dn = w_dn.sum(axis=1) / n_ok
            grad[lo:hi, i] = (p_up - p_dn) / (h * (p_up + p_dn))
    return grad


def simulate_bridge_batch(problem: BridgeProblem, n_steps: int, seed: int,
                          drift_mode="brownian", alpha: float | None = None,
                          n_paths: int = 1, x=None, y=None,
                          inner_budget: int = 128, inner_steps: int = 16,
                          fk_h: float = 1e-3,
                          rng: np.random.Generator | None = None) -> np.ndarray:
    """Euler-Maruyama paths, vectorised over n_paths; returns (m, n+1, d).

    drift_mode: 'brownian', 'exact_ou' (needs alpha, or a quadratic model to
    infer it), 'feynman_kac', or a callable (t, Z, tau) -> (m, d).  The time
    to the pin is floored at one step and the final point is clamped to y.
    Endpoints may be overridden per path via x, y of shape (m, d).
    """
    T, d, model = problem.T, problem.d, problem.model
    if n_steps < 2:
        raise ValueError("n_steps must be >= 2")
    delta = 2.0 * T / n_steps
    times = time_grid(T, n_steps)
    x = problem.x if x is None else np.asarray(x, dtype=float)
    y = problem.y if y is None else np.asarray(y, dtype=float)
    if rng is None:
        rng = stream(seed, 0)

    if callable(drift_mode):
        drift = drift_mode
    elif drift_mode == "brownian":
        def drift(t, Z, tau):
            return (y - Z) / tau
    elif drift_mode == "exact_ou":
        a = alpha
        if a is None and model.kind == "quadratic":
            a = float(model.params["a"])
        if a is None or a <= 0:
            raise ValueError("exact_ou needs alpha > 0 (or a quadratic model)")

        def drift(t, Z, tau):
            return _ou_drift_tau(a, Z, tau, y)
    elif drift_mode == "feynman_kac":
        def drift(t, Z, tau):
            pin = (y - Z) / tau
            if T - t <= 2.0 * delta:
                return pin
            grad = _fk_grad_log_psi(model, t, Z, T,
                                    np.asarray(y, float), inner_budget,
                                    inner_steps, fk_h, rng)
            return pin + grad
    else:
        raise ValueError(f"unknown drift mode {drift_mode!r}")

    Z = np.broadcast_to(x, (n_paths, d)).astype(float).copy()
    out = np.empty((n_paths, n_steps + 1, d))
    out[:, 0] = Z
    sqdt = np.sqrt(delta)
    for j in range(n_steps):
        t_j = times[j]
        tau = max(T - t_j, delta)
        b = drift(t_j, Z, tau)
        if not np.all(np.isfinite(b)):
            raise SimulationError("non-finite drift during simulation",
                                  partial=out[:, :j + 1].copy())
        Z = Z + b * delta + sqdt * rng.standard_normal((n_paths, d))
        out[:, j + 1] = Z
    out[:, -1] = np.broadcast_to(y, (n_paths, d))
    return out


def simulate_bridge(problem: BridgeProblem, n_steps: int = DEFAULT_N_STEPS,
                    seed: int = 0, drift_mode="brownian",
                    alpha: float | None = None, **kwargs) -> DiscretizedPath:
    """One Euler-Maruyama path as a DiscretizedPath."""
    pos = simulate_bridge_batch(problem, n_steps, seed, drift_mode=drift_mode,
                                alpha=alpha, n_paths=1, **kwargs)[0]
    return DiscretizedPath(times=time_grid(problem.T, n_steps), positions=pos)


def sample_reciprocal_mixture_batch(endpoint_sampler: Callable, T: float,
                                    model: PotentialModel, n_steps: int,
                                    seed: int, n_paths: int = 1,
                                    drift_mode="exact_ou",
                                    alpha: float | None = None) -> np.ndarray:
    """Mix bridges over random endpoint pairs.

    endpoint_sampler(rng, n) -> (x, y) arrays of shape (n, d).  Every path
    uses its own endpoints; returns positions (n_paths, n_steps+1, d).
    """
    rng = stream(seed, 0)
    x, y = endpoint_sampler(rng, n_paths)
    x = np.asarray(x, dtype=float).reshape(n_paths, model.d)
    y = np.asarray(y, dtype=float).reshape(n_paths, model.d)
    problem = BridgeProblem(x=x[0], y=y[0], T=T, model=model)
    return simulate_bridge_batch(problem, n_steps, seed, drift_mode=drift_mode,
                                 alpha=alpha, n_paths=n_paths, x=x, y=y,
                                 rng=rng)


def sample_reciprocal_mixture(endpoint_sampler: Callable, T: float,
                              model: PotentialModel, n_steps: int, seed: int,
                              drift_mode="exact_ou",
                              alpha: float | None = None) -> DiscretizedPath:
    """Draw one endpoint pair from the sampler, then one bridge through it."""
    pos = sample_reciprocal_mixture_batch(endpoint_sampler, T, model, n_steps,
                                          seed, n_paths=1,
                                          drift_mode=drift_mode, alpha=alpha)
    return DiscretizedPath(times=time_grid(T, n_steps), positions=pos[0])


def reverse_path(path: DiscretizedPath) -> DiscretizedPath:
    """Time reversal t -> -t on the symmetric grid: flip the positions."""
    return DiscretizedPath(times=path.times.copy(),
                           positions=path.positions[::-1].copy())
