"""Projection onto the reciprocal class of a discrete path measure.

A path measure on a finite state space factorizes through its endpoint
pair exactly when the density against a Markov reference P depends only on
(x_0, x_N).  Projecting a target endpoint law onto that class reduces to a
problem on the S x S endpoint matrix K(x_0, x_N) = sum of P over interior
paths: entropic projection is Sinkhorn scaling of K, and convex integral
costs (square, Hellinger) become small convex programs whose optimizers
again have constant density on each endpoint class.

`verify_endpoint_measurability` quantifies how far a candidate measure is
from the class (the within-class spread of dQ/dP) and checks that a
single-path perturbation is detected.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import xlogy

from .errors import AbsoluteContinuityError, InfeasibleError, PreconditionError, SolverError

_MAX_ENTRIES = 100_000
_SUPPORT_EPS = 1e-12


@dataclass(frozen=True)
class DiscretePathMeasure:
    """Probability tensor over paths (x_0, ..., x_N) on S states.

    ``probs`` has shape (S,) * (N + 1) with at most 1e5 entries; entries
    are nonnegative and sum to one.
    """

    states: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float).ravel()
        probs = np.asarray(self.probs, dtype=float)
        S = states.size
        if S < 1 or probs.ndim < 2 or probs.shape != (S,) * probs.ndim:
            raise ValueError("probs must have shape (S,) * (N + 1) with N >= 1")
        if probs.size > _MAX_ENTRIES:
            raise ValueError(f"path tensor exceeds {_MAX_ENTRIES} entries")
        if np.any(probs < 0) or not np.isfinite(probs).all():
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(probs.sum() - 1.0) > 1e-8:
            raise ValueError("probabilities must sum to 1")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "probs", probs / probs.sum())

    @property
    def S(self) -> int:
        return self.states.size

    @property
    def N(self) -> int:
        return self.probs.ndim - 1

    @property
    def strictly_positive(self) -> bool:
        return bool(np.all(self.probs > 0))

    def endpoint_matrix(self) -> np.ndarray:
        """K(x_0, x_N): total mass of paths joining each endpoint pair."""
        axes = tuple(range(1, self.probs.ndim - 1))
        return self.probs.sum(axis=axes) if axes else self.probs.copy()

    def marginal(self, index: int) -> np.ndarray:
        if not 0 <= index <= self.N:
            raise ValueError("marginal index out of range")
        axes = tuple(i for i in range(self.probs.ndim) if i != index)
        return self.probs.sum(axis=axes)


def build_reference(initial: np.ndarray,
                    transitions: Union[np.ndarray, Sequence[np.ndarray]],
                    n_steps: int,
                    states: Optional[np.ndarray] = None) -> DiscretePathMeasure:
    """Markov path measure from an initial law and transition matrices.

    Every transition probability must be strictly positive: endpoint
    classes with zero reference mass make density ratios against the
    reference meaningless.
    """
    initial = np.asarray(initial, dtype=float)
    S = initial.size
    if n_steps < 1:
        raise ValueError("need at least one step")
    mats = np.asarray(transitions, dtype=float)
    if mats.ndim == 2:
        mats = np.broadcast_to(mats, (n_steps, S, S))
    if mats.shape != (n_steps, S, S):
        raise ValueError("transitions must be one S x S matrix or one per step")
    if np.any(initial <= 0) or np.any(mats <= 0):
        raise PreconditionError(
            "zero transition or initial probabilities leave endpoint classes "
            "with no reference mass; supply a strictly positive chain")
    if not (np.allclose(initial.sum(), 1.0, atol=1e-10)
            and np.allclose(mats.sum(axis=2), 1.0, atol=1e-10)):
        raise ValueError("initial law and transition rows must sum to 1")
    probs = initial.copy()
    for step in range(n_steps):
        probs = probs[..., :, None] * mats[step]
    if states is None:
        states = np.arange(S, dtype=float)
    return DiscretePathMeasure(states=states, probs=probs)


@dataclass(frozen=True)
class ProjectionResult:
    """Projected measure plus diagnostics of the endpoint reduction."""

    Q: DiscretePathMeasure
    cost: float
    endpoint_residual: float
    iterations: int
    converged: bool


def _check_targets(P: DiscretePathMeasure, mu0: np.ndarray, muN: np.ndarray):
    mu0 = np.asarray(mu0, dtype=float)
    muN = np.asarray(muN, dtype=float)
    if mu0.shape != (P.S,) or muN.shape != (P.S,):
        raise ValueError("endpoint targets must have one entry per state")
    if np.any(mu0 < 0) or np.any(muN < 0):
        raise ValueError("endpoint targets must be nonnegative")
    if abs(mu0.sum() - 1.0) > 1e-10 or abs(muN.sum() - 1.0) > 1e-10:
        raise ValueError("endpoint targets must sum to 1")
    K = P.endpoint_matrix()
    support = K > _SUPPORT_EPS
    bad0 = (mu0 > 0) & ~support.any(axis=1)
    badN = (muN > 0) & ~support.any(axis=0)
    if bad0.any() or badN.any():
        raise AbsoluteContinuityError(
            "endpoint targets put mass where the reference has no paths")
    return mu0, muN, K, support


def _assemble(P: DiscretePathMeasure, q: np.ndarray, K: np.ndarray,
              support: np.ndarray) -> DiscretePathMeasure:
    """Lift an endpoint matrix q to the path tensor with density q/K on
    each endpoint class."""
    ratio = np.zeros_like(q)
    ratio[support] = q[support] / K[support]
    shape = [P.S] + [1] * (P.N - 1) + [P.S]
    probs = P.probs * ratio.reshape(shape)
    total = probs.sum()
    if total <= 0:
        raise SolverError("projection produced an empty measure")
    return DiscretePathMeasure(states=P.states, probs=probs / total)


def endpoint_residual(Q: DiscretePathMeasure, P: DiscretePathMeasure) -> float:
    """Largest within-class spread (max - min) of dQ/dP over endpoint
    classes carrying reference mass."""
    if Q.probs.shape != P.probs.shape:
        raise ValueError("measures must live on the same path space")
    mask = P.probs > 0
    if np.any(Q.probs[~mask] > _SUPPORT_EPS):
        raise AbsoluteContinuityError(
            "candidate puts mass on paths the reference excludes")
    ratio = np.zeros_like(Q.probs)
    ratio[mask] = Q.probs[mask] / P.probs[mask]
    flat_shape = (P.S,) + (-1,) + (P.S,)
    ratio = ratio.reshape(flat_shape)
    mask = mask.reshape(flat_shape)
    hi = np.where(mask, ratio, -np.inf).max(axis=1)
    lo = np.where(mask, ratio, np.inf).min(axis=1)
    spread = hi - lo
    return float(spread[np.isfinite(spread)].max(initial=0.0))


def project_entropic(P: DiscretePathMeasure, mu0: np.ndarray, muN: np.ndarray,
                     tol: float = 1e-10, max_iter: int = 20_000,
                     damping: float = 1.0) -> ProjectionResult:
    """Minimum relative entropy reciprocal measure with the prescribed
    endpoint marginals.

    Sinkhorn scaling of the endpoint matrix: q = diag(a) K diag(b).
    Updates are damped geometrically when ``damping`` < 1; iteration stops
    once both marginals match within ``tol``.
    """
    mu0, muN, K, support = _check_targets(P, mu0, muN)
    Keff = np.where(support, K, 0.0)
    a = np.ones(P.S)
    b = np.ones(P.S)
    err = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        Kb = Keff @ b
        new_a = np.divide(mu0, Kb, out=np.zeros_like(a), where=Kb > 0)
        a = a ** (1.0 - damping) * new_a ** damping if damping < 1.0 else new_a
        Ka = Keff.T @ a
        new_b = np.divide(muN, Ka, out=np.zeros_like(b), where=Ka > 0)
        b = b ** (1.0 - damping) * new_b ** damping if damping < 1.0 else new_b
        q = (a[:, None] * Keff) * b[None, :]
        err = max(np.abs(q.sum(axis=1) - mu0).max(),
                  np.abs(q.sum(axis=0) - muN).max())
        if err <= tol:
            break
    converged = err <= tol
    if not converged and damping >= 1.0:
        return project_entropic(P, mu0, muN, tol=tol, max_iter=max_iter,
                                damping=0.5)
    q = (a[:, None] * Keff) * b[None, :]
    Q = _assemble(P, q, K, support)
    cost = float(np.sum(xlogy(Q.probs, np.divide(
        Q.probs, P.probs, out=np.ones_like(Q.probs), where=P.probs > 0))))
    return ProjectionResult(Q=Q, cost=cost,
                            endpoint_residual=endpoint_residual(Q, P),
                            iterations=iterations, converged=converged)


def _square_program(K: np.ndarray, support: np.ndarray, mu0: np.ndarray,
                    muN: np.ndarray, max_rounds: int = 200):
    """Exact active-set solve of min sum q^2/K under marginal constraints.

    Stationarity on a working support gives q = K (lam_i + nu_j) / 2 with
    multipliers from a linear system (singular along the constant gauge,
    handled by least squares).  Entries driven negative leave the working
    support; excluded entries whose multiplier sum turns positive rejoin,
    worst first.  Strict convexity makes the working-set walk finite, and
    the interior case returns in a single round.  Returns (q, rounds).
    """
    S0, SN = K.shape
    active = support.copy()
    rhs = 2.0 * np.concatenate([mu0, muN])
    for rounds in range(1, max_rounds + 1):
        Keff = np.where(active, K, 0.0)
        A = np.zeros((S0 + SN, S0 + SN))
        A[:S0, :S0] = np.diag(Keff.sum(axis=1))
        A[:S0, S0:] = Keff
        A[S0:, :S0] = Keff.T
        A[S0:, S0:] = np.diag(Keff.sum(axis=0))
        sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        w = sol[:S0, None] + sol[None, S0:]
        q = np.where(active, K * w / 2.0, 0.0)
        neg = active & (q < -1e-12)
        if np.any(neg):
            active &= ~neg
            continue
        viol = support & ~active & (w > 1e-10)
        if np.any(viol):
            w_masked = np.where(viol, w, -np.inf)
            i, j = np.unravel_index(int(np.argmax(w_masked)), w.shape)
            active[i, j] = True
            continue
        return np.clip(q, 0.0, None), rounds
    raise SolverError("active-set solve did not settle")


def _dual_marginal_fit(p: np.ndarray, first: np.ndarray, last: np.ndarray,
                       S0: int, SN: int, mu0: np.ndarray, muN: np.ndarray,
                       kind: str, tol: float = 1e-12,
                       max_iter: int = 2000):
    """Exact dual coordinate ascent for marginal-constrained density costs.

    Minimizes sum_k p_k c(x_k / p_k) over nonnegative weights x with
    prescribed first-state and last-state marginals, for c(r) = r^2
    (``square``) or the overlap form c(r) = -sqrt(r) (``hellinger``).
    Stationarity ties each weight to its dual sum w = u[first] + v[last]:
    x = p max(w, 0) / 2 for the square cost and x = p / (4 w^2) with
    w > 0 for the overlap.  Each dual coordinate is recovered exactly
    from its marginal equation by a bracketed monotone scalar root solve;
    the dual is concave and differentiable, so the alternation converges
    globally.  Returns (x, sweeps).
    """
    act0 = mu0 > 0
    actN = muN > 0
    keep = (p > 0) & act0[first] & actN[last]
    if not np.any(keep):
        raise SolverError("no admissible paths for the requested marginals")
    pk = p[keep]
    fk = first[keep]
    lk = last[keep]
    groups0 = [np.nonzero(fk == i)[0] for i in range(S0)]
    groupsN = [np.nonzero(lk == j)[0] for j in range(SN)]

    def root_square(pg, og, target):
        # f increasing from f(-max og) = 0 through the all-active linear
        # regime, where w = 2 target / sum(pg) - min(og) already overshoots
        lo = -og.max()
        hi = 2.0 * target / pg.sum() - og.min() + 1.0

        def f(w):
            return 0.5 * np.sum(pg * np.maximum(w + og, 0.0)) - target

        return brentq(f, lo, hi, xtol=1e-14, rtol=8.9e-16)

    def root_overlap(pg, og, target):
        # f decreasing from the pole at -min(og); the bracket top makes
        # every term at most its value with the smallest offset
        pole = -og.min()
        lo = pole + 1e-150
        hi = pole + np.sqrt(pg.sum() / (4.0 * target)) + 1.0

        def f(w):
            with np.errstate(divide="ignore"):
                return np.sum(pg / (4.0 * (w + og) ** 2)) - target

        return brentq(f, lo, hi, xtol=1e-15, rtol=8.9e-16)

    if kind == "square":
        root = root_square

        def link(w):
            return np.maximum(w, 0.0) / 2.0

        u = np.zeros(S0)
        v = np.zeros(SN)
    else:
        root = root_overlap

        def link(w):
            return 1.0 / (4.0 * w ** 2)

        u = np.full(S0, 0.5 * np.sqrt(pk.sum()))
        v = np.full(SN, 0.5 * np.sqrt(pk.sum()))

    err = np.inf
    for sweep in range(1, max_iter + 1):
        for i in np.nonzero(act0)[0]:
            idx = groups0[i]
            u[i] = root(pk[idx], v[lk[idx]], mu0[i])
        for j in np.nonzero(actN)[0]:
            idx = groupsN[j]
            v[j] = root(pk[idx], u[fk[idx]], muN[j])
        x = pk * link(u[fk] + v[lk])
        row = np.bincount(fk, weights=x, minlength=S0)
        col = np.bincount(lk, weights=x, minlength=SN)
        err = max(np.abs(row - mu0).max(), np.abs(col - muN).max())
        if err <= tol:
            break
    else:
        raise SolverError(f"dual ascent stalled at marginal error {err:.3e}")
    out = np.zeros_like(p)
    out[keep] = x
    return out, sweep


def _ipfp(p: np.ndarray, first: np.ndarray, last: np.ndarray,
          S0: int, SN: int, mu0: np.ndarray, muN: np.ndarray,
          tol: float = 1e-12, max_iter: int = 100_000):
    """Iterative proportional fitting on raw path weights.

    Alternately rescales the paths sharing a first (then a last) state so
    that marginal matches its target.  The limit is the relative-entropy
    minimizer over the marginal polytope, and convergence is geometric
    for references with connected support.  Returns (x, sweeps).
    """
    act0 = mu0 > 0
    actN = muN > 0
    keep = (p > 0) & act0[first] & actN[last]
    if not np.any(keep):
        raise SolverError("no admissible paths for the requested marginals")
    x = np.where(keep, p, 0.0)
    err = np.inf
    for sweep in range(1, max_iter + 1):
        row = np.bincount(first, weights=x, minlength=S0)
        scale0 = np.divide(mu0, row, out=np.zeros_like(mu0), where=row > 0)
        x *= scale0[first]
        col = np.bincount(last, weights=x, minlength=SN)
        scaleN = np.divide(muN, col, out=np.zeros_like(muN), where=col > 0)
        x *= scaleN[last]
        row = np.bincount(first, weights=x, minlength=S0)
        err = np.abs(row - mu0).max()
        if err <= tol:
            break
    else:
        raise SolverError(
            f"proportional fitting stalled at marginal error {err:.3e}")
    return x, sweep


def project_convex(P: DiscretePathMeasure, mu0: np.ndarray, muN: np.ndarray,
                   cost: str = "square") -> ProjectionResult:
    """Reciprocal projection minimizing an integral cost of dQ/dP.

    ``square`` integrates the squared density (chi-square geometry) and is
    solved exactly by an active-set walk over its KKT linear systems;
    ``hellinger`` maximizes the root-density overlap, phrased as the
    equivalent convex program and solved by exact dual coordinate ascent.
    The optimizer's density is constant on endpoint classes, so both
    reduce to programs on the endpoint matrix.
    """
    if cost not in ("square", "hellinger"):
        raise ValueError("cost must be 'square' or 'hellinger'")
    mu0, muN, K, support = _check_targets(P, mu0, muN)
    if cost == "square":
        q, iterations = _square_program(K, support, mu0, muN)
    else:
        idx = np.argwhere(support)
        x, iterations = _dual_marginal_fit(
            K[support], idx[:, 0], idx[:, 1], K.shape[0], K.shape[1],
            mu0, muN, cost)
        q = np.zeros_like(K)
        q[support] = x
    err = max(np.abs(q.sum(axis=1) - mu0).max(),
              np.abs(q.sum(axis=0) - muN).max())
    if err > 1e-8:
        raise InfeasibleError(
            f"endpoint marginals unreachable (residual {err:.3e})")
    Q = _assemble(P, q, K, support)
    ratio = np.divide(q, K, out=np.zeros_like(q), where=support)
    if cost == "square":
        total = float(np.sum(np.divide(q ** 2, K, out=np.zeros_like(q),
                                       where=support)))
    else:
        total = float(np.sum(np.sqrt(np.clip(K * q, 0.0, None))))
    del ratio
    return ProjectionResult(Q=Q, cost=total,
                            endpoint_residual=endpoint_residual(Q, P),
                            iterations=iterations, converged=err <= 1e-8)


@dataclass(frozen=True)
class MeasurabilityReport:
    """Class-membership residual of a candidate plus the perturbation
    sensitivity of the residual statistic."""

    residual: float
    perturbed_residual: float
    perturbation: float

    @property
    def detector_fired(self) -> bool:
        return self.perturbed_residual >= 1e-4


def verify_endpoint_measurability(Q: DiscretePathMeasure,
                                  P: DiscretePathMeasure,
                                  perturbation: float = 1e-3
                                  ) -> MeasurabilityReport:
    """Within-class density spread of Q against P, and a sensitivity probe.

    The probe multiplies the path with the largest density ratio Q/P by
    (1 + perturbation) and renormalizes; that ratio is at least 1 for any
    pair of probability measures, so whenever endpoint classes contain more
    than one path the spread statistic must register a change of roughly
    the perturbation size.  This guards against residual computations that
    silently collapse classes.  One-step chains are excluded from the
    guarantee: there a path carries no information beyond its endpoints.
    """
    base = endpoint_residual(Q, P)
    flat = Q.probs.ravel().copy()
    p_flat = P.probs.ravel()
    ratio = np.divide(flat, p_flat, out=np.zeros_like(flat), where=p_flat > 0)
    target = int(np.argmax(ratio))
    flat[target] *= 1.0 + perturbation
    flat /= flat.sum()
    perturbed = DiscretePathMeasure(states=Q.states,
                                    probs=flat.reshape(Q.probs.shape))
    return MeasurabilityReport(residual=base,
                               perturbed_residual=endpoint_residual(perturbed, P),
                               perturbation=perturbation)


def simplex_oracle(P: DiscretePathMeasure, mu0: np.ndarray, muN: np.ndarray,
                   cost: str = "entropic") -> np.ndarray:
    """Reference optimizer over the full path simplex, for cross-checks.

    Works with every path probability as a separate variable — no
    endpoint-class reduction and no endpoint matrix — using proportional
    fitting for the entropic cost and exact dual coordinate ascent on the
    path variables otherwise.  Agreement with the reduced projections is
    therefore evidence that restricting to densities measurable in the
    endpoints loses nothing.  Practical up to a few thousand paths.
    """
    if cost not in ("entropic", "square", "hellinger"):
        raise ValueError("cost must be 'entropic', 'square' or 'hellinger'")
    mu0, muN, _, _ = _check_targets(P, mu0, muN)
    p = P.probs.ravel()
    n = p.size
    if n > 4000:
        raise PreconditionError("oracle is for small instances only")
    S = P.S
    first = np.repeat(np.arange(S), n // S)
    last = np.tile(np.arange(S), n // S)
    if cost == "entropic":
        x, _ = _ipfp(p, first, last, S, S, mu0, muN, tol=1e-13)
    else:
        x, _ = _dual_marginal_fit(p, first, last, S, S, mu0, muN, cost,
                                  tol=1e-13)
    feasibility = max(
        np.abs(np.bincount(first, weights=x, minlength=S) - mu0).max(),
        np.abs(np.bincount(last, weights=x, minlength=S) - muN).max())
    if feasibility > 1e-8:
        raise SolverError(
            f"oracle failed to satisfy constraints (error {feasibility:.3e})")
    x = np.clip(x, 0.0, None)
    return (x / x.sum()).reshape(P.probs.shape)
