"""Inner products on the path interval and marginal concentration.

The pinned-OU process with rate alpha on [-T, T] induces a bilinear form on
test functions h, g through the covariance of increment integrals
int h dX.  Writing K for minus the suffix-integral of the prefix-integral
and P for the projection removing the interval mean, the form is

    <h, g>_alpha = int phi_h g dt,   (I - alpha^2 P K P) phi_h = P h,

which at alpha = 0 collapses to int h g - (1/2T) int h int g, the Brownian
bridge increment covariance.  The discretisation below uses trapezoid
prefix sums; its key algebraic facts (the weighted adjoint of the prefix
matrix acts as the suffix integral on mean-zero images, P commutes with the
resolvent) make the discrete form symmetric to machine precision while
staying second-order accurate.

Functionals F(omega) = f(int h1 domega, ..., int hn domega) of finitely
many stochastic integrals carry an explicit derivative in the direction of
path perturbations, sum_i d_i f . h^i; this module computes it along with
the integrals themselves (left-node Riemann-Stieltjes sums).

The same covariance gives the marginal concentration rate

    xi_alpha(t) = alpha sinh(2 alpha T) / (2 sinh(alpha(T+t)) sinh(alpha(T-t)))

(equal to 1/(2 Var X_t)), so deviation probabilities of 1-Lipschitz
observables obey the one-sided Gaussian tail bound
P(f(X_t) - E f(X_t) >= R) <= exp(-xi_alpha(t) R^2).
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .bridges import BridgeProblem, DiscretizedPath, pinned_fluctuations, time_grid
from .errors import PreconditionError
from .hyperbolic import log_sinh
from .mcengine import TailEstimate, stream, wilson_interval
from .potentials import convexity_certificate

DEFAULT_GRID_STEPS = 512
_CHUNK = 20_000


def xi_alpha(t, alpha: float, T: float):
    """Concentration rate 1/(2 Var X_t) of the pinned marginal at time t.

    Evaluated in log space so large alpha*T cannot overflow.  |t| = T
    returns +inf (the pins admit no fluctuation there); |t| > T is an
    error.  Vectorized over t.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(np.abs(t_arr) > T):
        raise ValueError("need |t| <= T")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    with np.errstate(divide="ignore", over="ignore"):
        if alpha == 0.0:
            out = T / ((T - t_arr) * (T + t_arr))
        else:
            out = np.exp(np.log(alpha) + log_sinh(2.0 * alpha * T)
                         - np.log(2.0) - log_sinh(alpha * (T + t_arr))
                         - log_sinh(alpha * (T - t_arr)))
    out = np.where(np.abs(t_arr) == T, np.inf, out)
    return float(out) if np.isscalar(t) or np.ndim(t) == 0 else out


def indicator_values(times: np.ndarray, a: float, b: float) -> np.ndarray:
    """Node values of 1_[a,b]: half weight at interior jump nodes, full
    weight when the jump sits on the domain boundary.

    The half-value convention is the average of one-sided limits, which
    keeps trapezoid quadrature of products second-order accurate; at the
    boundary only one side exists, so the one-sided value is kept.
    """
    if not a < b:
        raise ValueError("need a < b")
    tol = 1e-9 * (times[-1] - times[0])
    vals = ((times > a + tol) & (times < b - tol)).astype(float)
    vals[np.abs(times - a) <= tol] = 1.0 if abs(a - times[0]) <= tol else 0.5
    vals[np.abs(times - b) <= tol] = 1.0 if abs(b - times[-1]) <= tol else 0.5
    return vals


@dataclass(frozen=True)
class GridFunction:
    """An L2([-T,T]; R^d) element sampled on the uniform node grid.

    ``values`` has one row per node: shape (n+1,) for scalar functions or
    (n+1, d) for vector ones.  All values must be finite and the grid must
    be the uniform symmetric one produced by ``time_grid``.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.size < 3:
            raise ValueError("need a 1-D grid with at least 3 nodes")
        steps = np.diff(times)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("grid must be uniform")
        if abs(times[0] + times[-1]) > 1e-9 * (times[-1] - times[0]):
            raise ValueError("grid must be symmetric about 0")
        if values.ndim not in (1, 2) or values.shape[0] != times.size:
            raise ValueError("values need one row per grid node")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def delta(self) -> float:
        return 2.0 * self.T / self.n_steps

    @property
    def d(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    def same_grid(self, other: "GridFunction") -> bool:
        return (self.times.size == other.times.size
                and bool(np.array_equal(self.times, other.times)))

    @classmethod
    def from_callable(cls, f: Callable, T: float, n_steps: int) -> "GridFunction":
        times = time_grid(T, n_steps)
        return cls(times=times, values=np.asarray(f(times), dtype=float))

    @classmethod
    def indicator(cls, a: float, b: float, T: float, n_steps: int) -> "GridFunction":
        times = time_grid(T, n_steps)
        return cls(times=times, values=indicator_values(times, a, b))


def _node_values(h, times: np.ndarray) -> np.ndarray:
    if isinstance(h, GridFunction):
        if not np.array_equal(h.times, times):
            raise ValueError("grid mismatch")
        return h.values
    vals = np.asarray(h(times) if callable(h) else h, dtype=float)
    if vals.shape[0] != times.size:
        raise ValueError("test function must give one value per grid node")
    return vals


class AlphaInnerProduct:
    """Discrete resolvent form <h, g>_alpha on the uniform grid of [-T, T].

    Builds the trapezoid prefix matrix J, weights w, the mean-removing
    projection P, and the operator B = -P (W^-1 J^T W) J P; then
    phi_h solves (I - alpha^2 B) phi = P h and
    <h, g> = sum_i w_i phi_h(t_i) g(t_i).  The solved phi always has zero
    weighted mean.  The factorisation is cached, so many pairings at one
    (alpha, T, n_steps) are cheap; instances are immutable after
    construction and safe to share across threads.
    """

    def __init__(self, alpha: float, T: float, n_steps: int):
        if alpha < 0:
            raise ValueError("alpha must be >= 0")
        if T <= 0:
            raise ValueError("T must be positive")
        if n_steps < 2:
            raise ValueError("n_steps must be >= 2")
        self.alpha = float(alpha)
        self.T = float(T)
        self.n_steps = int(n_steps)
        self.times = time_grid(T, n_steps)
        self.delta = 2.0 * T / n_steps

        n1 = n_steps + 1
        w = np.full(n1, self.delta)
        w[0] = w[-1] = 0.5 * self.delta
        self.w = w

        # prefix-trapezoid matrix: (J phi)_i = trapz(phi[:i+1])
        J = np.tril(np.full((n1, n1), self.delta))
        J[:, 0] = 0.5 * self.delta
        np.fill_diagonal(J, 0.5 * self.delta)
        J[0, :] = 0.0

        P = np.eye(n1) - np.outer(np.ones(n1), w) / (2.0 * T)
        self._P = P
        adjoint = (J.T * w[None, :]) / w[:, None]
        B = -P @ (adjoint @ (J @ P))
        A = np.eye(n1) - self.alpha ** 2 * B
        self._lu = lu_factor(A)
        del J, adjoint, B, A   # keep the footprint to P + the factorisation

    def project(self, h) -> np.ndarray:
        """Remove the weighted interval mean from node values."""
        return self._P @ _node_values(h, self.times)

    def solve_phi(self, h) -> np.ndarray:
        """Resolvent image phi_h; has zero weighted mean.  Columnwise for
        vector-valued h."""
        return lu_solve(self._lu, self.project(h))

    def inner(self, h, g) -> float:
        """<h, g>_alpha via phi_h paired with g under the grid weights."""
        phi = self.solve_phi(h)
        gv = _node_values(g, self.times)
        if phi.ndim != gv.ndim:
            raise ValueError("h and g must share the number of components")
        if phi.ndim == 1:
            return float(np.sum(self.w * phi * gv))
        return float(np.sum(self.w[:, None] * phi * gv))

    def bilinear_matrix(self) -> np.ndarray:
        """Dense matrix M with <h, g> = h^T M g; symmetric by construction."""
        resolvent = lu_solve(self._lu, self._P)
        return (self.w[:, None] * resolvent).T


@lru_cache(maxsize=8)
def cached_operator(alpha: float, T: float, n_steps: int) -> AlphaInnerProduct:
    """Shared immutable operator per (alpha, T, n_steps)."""
    return AlphaInnerProduct(alpha, T, n_steps)


def solve_phi(h: GridFunction, alpha: float, T: float) -> GridFunction:
    """Solve the resolvent equation (I - alpha^2 PKP) phi = Ph for h.

    The grid of h must span [-T, T] with at least 16 intervals; the result
    lives on the same grid and has zero weighted mean.
    """
    if abs(h.T - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"grid spans [-{h.T}, {h.T}], not [-{T}, {T}]")
    if h.n_steps < 16:
        raise ValueError("need at least 16 grid intervals")
    op = cached_operator(float(alpha), float(h.T), h.n_steps)
    return GridFunction(times=h.times, values=op.solve_phi(h.values))


def inner_product_alpha(h: GridFunction, g: GridFunction,
                        alpha: float, T: float) -> float:
    """<h, g>_alpha = trapezoid pairing of solve_phi(h) with g."""
    if not h.same_grid(g):
        raise ValueError("h and g must share one grid")
    phi = solve_phi(h, alpha, T)
    op = cached_operator(float(alpha), float(h.T), h.n_steps)
    return op.inner(h.values, g.values)


def indicator_phi(t: float, alpha: float, T: float, n_steps: int) -> GridFunction:
    """Closed-form resolvent image for h = 1_[-T, t].

    phi(s) = sinh(a(T-t)) cosh(a(T+s)) / sinh(2aT) - 1_[t,T](s) cosh(a(s-t)),
    with the half-value convention at the jump node s = t.  Reference
    solution for convergence checks of the discrete solver.
    """
    if not -T < t < T:
        raise ValueError("need -T < t < T")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    s = time_grid(T, n_steps)
    smooth = (np.sinh(alpha * (T - t)) / np.sinh(2.0 * alpha * T)
              * np.cosh(alpha * (T + s)))
    tol = 1e-9 * 2.0 * T
    ind = np.where(np.abs(s - t) <= tol, 0.5, (s > t).astype(float))
    return GridFunction(times=s, values=smooth - ind * np.cosh(alpha * (s - t)))


@dataclass(frozen=True)
class SimpleFunctional:
    """F(omega) = f(int h1 domega, ..., int hn domega) with derivatives.

    ``f`` maps an n-vector of stochastic integrals to a scalar; ``grad_f``
    and ``hess_f`` return its gradient (n,) and Hessian (n, n).  The
    integrals use left-node Riemann-Stieltjes sums on the path grid (the
    Ito convention).  Directions must share one grid.
    """

    f: Callable
    grad_f: Callable
    hess_f: Optional[Callable]
    directions: tuple

    def __post_init__(self):
        directions = tuple(self.directions)
        if not directions:
            raise ValueError("need at least one direction")
        for h in directions:
            if not isinstance(h, GridFunction):
                raise TypeError("directions must be GridFunctions")
            if not directions[0].same_grid(h):
                raise ValueError("directions must share one grid")
        object.__setattr__(self, "directions", directions)

    @property
    def n_directions(self) -> int:
        return len(self.directions)

    @property
    def times(self) -> np.ndarray:
        return self.directions[0].times

    def integrals(self, positions: np.ndarray) -> np.ndarray:
        """Left-node sums int h^i . domega for one path or a batch.

        ``positions`` is (..., n_nodes) for scalar paths or (..., n_nodes, d)
        for vector ones; the result appends one axis of length n_directions.
        """
        pos = np.asarray(positions, dtype=float)
        n1 = self.times.size
        d = self.directions[0].d
        if pos.shape[-1] == n1 and d == 1:
            d_omega = np.diff(pos, axis=-1)
            cols = [d_omega @ h.values[:-1] for h in self.directions]
        elif pos.ndim >= 2 and pos.shape[-2] == n1 and pos.shape[-1] == d:
            d_omega = np.diff(pos, axis=-2)
            cols = [np.einsum("...jk,jk->...", d_omega,
                              h.values.reshape(n1, d)[:-1])
                    for h in self.directions]
        else:
            raise ValueError("path nodes do not match the direction grid")
        return np.stack(cols, axis=-1)

    def evaluate(self, path: DiscretizedPath) -> float:
        return float(self.f(self.integrals(path.positions)))


def malliavin_derivative(F: SimpleFunctional, path: DiscretizedPath) -> GridFunction:
    """Derivative sum_i d_i f(integrals) . h^i of F at the given path."""
    if not np.allclose(path.times, F.times, rtol=1e-9, atol=0.0):
        raise ValueError("path grid does not match the direction grid")
    u = F.integrals(path.positions)
    grad = np.asarray(F.grad_f(u), dtype=float)
    if grad.shape != (F.n_directions,):
        raise ValueError("grad_f must return one value per direction")
    values = sum(g * h.values for g, h in zip(grad, F.directions))
    return GridFunction(times=F.times, values=values)


@dataclass(frozen=True)
class CovarianceCheck:
    """Monte Carlo increment covariance versus the resolvent form."""

    measured: float
    predicted: float
    std_error: float
    n_samples: int
    n_sigma: float

    @property
    def passed(self) -> bool:
        return abs(self.measured - self.predicted) <= self.n_sigma * self.std_error


def verify_covariance_identity(alpha: float, T: float, h, g,
                               budget: int = 100_000, seed: int = 0,
                               n_steps: Optional[int] = None,
                               n_sigma: float = 3.0) -> CovarianceCheck:
    """Compare E[int h dX int g dX] over exact pinned paths with <h, g>_alpha.

    Paths are the rate-alpha bridge pinned to 0 at both ends, sampled
    exactly; the integrals use left-node sums, so the expectation of the
    raw product is the discrete increment covariance.  h and g may be
    GridFunctions (shared grid) or callables sampled on a default grid.
    """
    if alpha <= 0:
        raise PreconditionError("needs a positive rate alpha")
    if isinstance(h, GridFunction) or isinstance(g, GridFunction):
        ref = h if isinstance(h, GridFunction) else g
        n_steps = ref.n_steps
    elif n_steps is None:
        n_steps = DEFAULT_GRID_STEPS
    times = time_grid(T, n_steps)
    hv = _node_values(h, times)
    gv = _node_values(g, times)
    if hv.ndim != 1 or gv.ndim != 1:
        raise ValueError("only scalar test functions are supported here")

    rng = stream(seed, 0)
    products = np.empty(budget)
    done = 0
    while done < budget:
        m = min(_CHUNK, budget - done)
        fluct = pinned_fluctuations(alpha, -T, T, n_steps, m, 1, rng)
        dX = np.diff(fluct[:, :, 0], axis=1)
        products[done:done + m] = (dX @ hv[:-1]) * (dX @ gv[:-1])
        done += m

    measured = float(products.mean())
    se = float(products.std(ddof=1) / np.sqrt(budget))
    predicted = inner_product_alpha(GridFunction(times, hv),
                                    GridFunction(times, gv), alpha, T)
    return CovarianceCheck(measured=measured, predicted=predicted,
                           std_error=se, n_samples=budget, n_sigma=n_sigma)


@dataclass(frozen=True)
class TailRow:
    """One R cell of a concentration check."""

    t: float
    R: float
    bound: float
    estimate: TailEstimate

    @property
    def passed(self) -> bool:
        return self.estimate.ci_high <= self.bound


@dataclass(frozen=True)
class ConcentrationReport:
    """One-sided tail probabilities of a bridge marginal against
    exp(-xi_alpha(t) R^2)."""

    alpha_hat: float
    T: float
    t: float
    n_samples: int
    rows: tuple

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def worst_margin(self) -> float:
        return max(r.estimate.ci_high - r.bound for r in self.rows)


def verify_concentration(problem: BridgeProblem, t: float, budget: int,
                         R_grid, seed: int = 0,
                         n_steps: int = 400) -> ConcentrationReport:
    """Empirical one-sided tails P(first coord of X_t - mean >= R) versus
    the Gaussian rate bound exp(-xi R^2), with Wilson upper limits.

    The model must certify convexity of the reciprocal potential on the
    endpoint region (rate alpha_hat enters the bound) and must belong to
    the quadratic family, whose bridges are sampled exactly; the pins shift
    only the mean, which cancels in the deviation.
    """
    model = problem.model
    if model.kind not in ("quadratic", "quadratic_shifted"):
        raise PreconditionError(
            "tail sampling uses the exact pinned-Gaussian bridge; "
            "needs a quadratic model")
    reach = 1.0 + float(np.max(np.abs(np.concatenate([problem.x, problem.y]))))
    region = [(-reach, reach)] * problem.d
    cert = convexity_certificate(model, region, resolution=8)
    if not cert.positive:
        raise PreconditionError(
            f"convexity certificate failed (min eigenvalue "
            f"{cert.min_eigenvalue:.3g})")
    alpha_hat = cert.alpha_hat
    rate_exact = float(model.params["a"])

    T = problem.T
    times = time_grid(T, n_steps)
    j = int(round((t + T) / (2.0 * T / n_steps)))
    if not 0 <= j <= n_steps or abs(times[j] - t) > 1e-9 * T:
        raise ValueError(f"t={t} is not on the sampling grid; adjust n_steps")
    R_values = np.atleast_1d(np.asarray(R_grid, dtype=float))

    counts = np.zeros(len(R_values), dtype=np.int64)
    rng = stream(seed, 0)
    done = 0
    while done < budget:
        m = min(_CHUNK, budget - done)
        fluct = pinned_fluctuations(rate_exact, -T, T, n_steps, m, 1, rng)
        dev = fluct[:, j, 0]
        for k, R in enumerate(R_values):
            counts[k] += int(np.count_nonzero(dev >= R))
        done += m

    rate = xi_alpha(t, alpha_hat, T)
    rows = []
    for k, R in enumerate(R_values):
        succ = int(counts[k])
        lo, hi = wilson_interval(succ, budget)
        est = TailEstimate(p_hat=succ / budget, ci_low=lo, ci_high=hi,
                           successes=succ, n=budget)
        bound = float(np.exp(-rate * R * R)) if np.isfinite(rate) else 0.0
        rows.append(TailRow(t=float(t), R=float(R), bound=bound, estimate=est))
    return ConcentrationReport(alpha_hat=alpha_hat, T=T, t=float(t),
                               n_samples=budget, rows=tuple(rows))
