"""Drift potentials and their curvature field.

A model is the potential U(t, z) of the overdamped dynamics

    dX_t = -grad U(t, X_t) dt + dB_t,      generator  L f = -grad U . grad f + (1/2) Lap f.

The object of interest is the scalar field

    script_U(t, z) = (1/2)|grad U|^2 - (1/2) Lap U - dU/dt

and its gradient, which is what pinned versions of the dynamics actually
feel: two potentials with the same grad script_U share all their bridges.
grad script_U can be obtained two ways, and the agreement of the two routes
is a standing self-check:

  * differentiate script_U directly, or
  * component-wise as -(L + d/dt) applied to dU/dz_i, i.e.
        (Hess U . grad U)_i - (1/2) (grad Lap U)_i - d/dt (grad U)_i.

Evaluators are vectorised: z has shape (..., d), t is a scalar or an array
broadcastable against z[..., 0].  Models built from a bare callable get
central-difference derivatives with step h_fd * (1 + |z|).
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import EvaluationError, PreconditionError

DEFAULT_FD_STEP = 1e-4


def _as_points(z, d):
    z = np.asarray(z, dtype=float)
    if z.shape == () and d == 1:
        z = z.reshape(1)
    if z.shape[-1] != d:
        raise ValueError(f"expected trailing dimension {d}, got shape {z.shape}")
    return z


@dataclass(frozen=True)
class PotentialModel:
    """A potential with enough derivative structure for bridge work.

    Required evaluators: U, grad_U, laplacian_U, dt_U.  The optional closed
    forms (hessian_U, grad_laplacian_U, grad_script_U) unlock exact cross
    checks; absent ones are synthesised by central differences on demand.
    ``grad_script_U_sup`` is a model-declared global bound on |grad script_U|,
    needed by experiments that integrate it over unbounded time horizons.
    """

    d: int
    U: Callable
    grad_U: Callable
    laplacian_U: Callable
    dt_U: Callable
    time_homogeneous: bool = True
    hessian_U: Optional[Callable] = None
    grad_laplacian_U: Optional[Callable] = None
    dt_grad_U: Optional[Callable] = None
    grad_script_U: Optional[Callable] = None
    grad_script_U_sup: Optional[float] = None
    h_fd: float = DEFAULT_FD_STEP
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def with_offset(self, c: float) -> "PotentialModel":
        """The model with U replaced by U + c (same dynamics, same bridges)."""
        base_U = self.U
        return replace(self, U=lambda t, z: base_U(t, z) + c)

    def fd_step(self, z) -> np.ndarray:
        """Central-difference step h_fd * (1 + |z|), per evaluation point."""
        z = _as_points(z, self.d)
        return self.h_fd * (1.0 + np.linalg.norm(z, axis=-1))


def from_callable(U: Callable, d: int, time_homogeneous: bool = True,
                  h_fd: float = DEFAULT_FD_STEP, kind: str = "custom",
                  params: dict | None = None) -> PotentialModel:
    """Wrap a bare potential; all derivatives come from central differences."""

    def step(z):
        return h_fd * (1.0 + np.linalg.norm(z, axis=-1, keepdims=True))

    def grad(t, z):
        z = _as_points(z, d)
        h = step(z)
        g = np.empty_like(z)
        for i in range(d):
            dz = np.zeros_like(z)
            dz[..., i] = h[..., 0]
            g[..., i] = (U(t, z + dz) - U(t, z - dz)) / (2.0 * h[..., 0])
        return g

    def lap(t, z):
        z = _as_points(z, d)
        h = step(z)
        out = np.zeros(z.shape[:-1])
        u0 = U(t, z)
        for i in range(d):
            dz = np.zeros_like(z)
            dz[..., i] = h[..., 0]
            out = out + (U(t, z + dz) - 2.0 * u0 + U(t, z - dz)) / h[..., 0] ** 2
        return out

    if time_homogeneous:
        def dt(t, z):
            z = _as_points(z, d)
            return np.zeros(z.shape[:-1])
    else:
        def dt(t, z):
            z = _as_points(z, d)
            return (U(t + h_fd, z) - U(t - h_fd, z)) / (2.0 * h_fd)

    return PotentialModel(d=d, U=U, grad_U=grad, laplacian_U=lap, dt_U=dt,
                          time_homogeneous=time_homogeneous, h_fd=h_fd,
                          kind=kind, params=dict(params or {}))


# ---------------------------------------------------------------------------
# Built-in model families
# ---------------------------------------------------------------------------

def quadratic_model(a: float = 1.0, d: int = 1,
                    shift: float | np.ndarray = 0.0) -> PotentialModel:
    """U(z) = (a/2)|z|^2 + b.z  (b = shift broadcast to a d-vector).

    script_U = (1/2)|a z + b|^2 - a d / 2, grad script_U = a (a z + b); the
    curvature field has constant Hessian a^2 I.
    """
    b = np.broadcast_to(np.asarray(shift, dtype=float), (d,)).copy()

    def U(t, z):
        z = _as_points(z, d)
        return 0.5 * a * np.sum(z * z, axis=-1) + z @ b

    def grad(t, z):
        z = _as_points(z, d)
        return a * z + b

    def lap(t, z):
        z = _as_points(z, d)
        return np.full(z.shape[:-1], a * d, dtype=float)

    def dt(t, z):
        z = _as_points(z, d)
        return np.zeros(z.shape[:-1])

    def hess(t, z):
        z = _as_points(z, d)
        return np.broadcast_to(a * np.eye(d), z.shape[:-1] + (d, d)).copy()

    def grad_lap(t, z):
        z = _as_points(z, d)
        return np.zeros_like(z)

    def grad_script(t, z):
        z = _as_points(z, d)
        return a * (a * z + b)

    kind = "quadratic" if not np.any(b) else "quadratic_shifted"
    params = {"a": a, "d": d}
    if np.any(b):
        params["shift"] = b.tolist()
    return PotentialModel(d=d, U=U, grad_U=grad, laplacian_U=lap, dt_U=dt,
                          hessian_U=hess, grad_laplacian_U=grad_lap,
                          grad_script_U=grad_script, kind=kind, params=params)


def sine_model(eps: float = 0.2, d: int = 1) -> PotentialModel:
    """U(z) = eps * sum_i sin(z_i), a bounded periodic perturbation.

    Per coordinate: script_U' = -(eps^2/2) sin(2 z_i) + (eps/2) cos(z_i),
    globally bounded by eps/2 + eps^2/2, which the model declares.
    """

    def U(t, z):
        z = _as_points(z, d)
        return eps * np.sum(np.sin(z), axis=-1)

    def grad(t, z):
        z = _as_points(z, d)
        return eps * np.cos(z)

    def lap(t, z):
        z = _as_points(z, d)
        return -eps * np.sum(np.sin(z), axis=-1)

    def dt(t, z):
        z = _as_points(z, d)
        return np.zeros(z.shape[:-1])

    def hess(t, z):
        z = _as_points(z, d)
        h = np.zeros(z.shape[:-1] + (d, d))
        idx = np.arange(d)
        h[..., idx, idx] = -eps * np.sin(z)
        return h

    def grad_lap(t, z):
        z = _as_points(z, d)
        return -eps * np.cos(z)

    def grad_script(t, z):
        z = _as_points(z, d)
        return -0.5 * eps * eps * np.sin(2.0 * z) + 0.5 * eps * np.cos(z)

    return PotentialModel(d=d, U=U, grad_U=grad, laplacian_U=lap, dt_U=dt,
                          hessian_U=hess, grad_laplacian_U=grad_lap,
                          grad_script_U=grad_script,
                          grad_script_U_sup=0.5 * eps + 0.5 * eps * eps,
                          kind="sine", params={"eps": eps, "d": d})


def zero_model(d: int = 1) -> PotentialModel:
    """U = 0: free Brownian motion; the curvature field vanishes."""

    def U(t, z):
        z = _as_points(z, d)
        return np.zeros(z.shape[:-1])

    def grad(t, z):
        z = _as_points(z, d)
        return np.zeros_like(z)

    def hess(t, z):
        z = _as_points(z, d)
        return np.zeros(z.shape[:-1] + (d, d))

    return PotentialModel(d=d, U=U, grad_U=grad, laplacian_U=U, dt_U=U,
                          hessian_U=hess, grad_laplacian_U=grad,
                          grad_script_U=grad, grad_script_U_sup=0.0,
                          kind="zero", params={"d": d})


def polynomial_model(coeffs) -> PotentialModel:
    """One-dimensional U(z) = sum_k c_k z^k with exact polynomial calculus."""
    poly = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))
    d1 = poly.deriv(1)
    d2 = poly.deriv(2)
    d3 = poly.deriv(3)
    # script_U = (1/2)(U')^2 - (1/2)U'' ; script_U' = U' U'' - (1/2) U'''
    script_grad_poly = d1 * d2 - 0.5 * d3

    def U(t, z):
        z = _as_points(z, 1)
        return poly(z[..., 0])

    def grad(t, z):
        z = _as_points(z, 1)
        return d1(z)

    def lap(t, z):
        z = _as_points(z, 1)
        return d2(z[..., 0])

    def dt(t, z):
        z = _as_points(z, 1)
        return np.zeros(z.shape[:-1])

    def hess(t, z):
        z = _as_points(z, 1)
        return d2(z)[..., None]

    def grad_lap(t, z):
        z = _as_points(z, 1)
        return d3(z)

    def grad_script(t, z):
        z = _as_points(z, 1)
        return script_grad_poly(z)

    return PotentialModel(d=1, U=U, grad_U=grad, laplacian_U=lap, dt_U=dt,
                          hessian_U=hess, grad_laplacian_U=grad_lap,
                          grad_script_U=grad_script, kind="custom_polynomial",
                          params={"coeffs": list(np.asarray(coeffs, float))})


_BUILTIN_KINDS = ("quadratic", "quadratic_shifted", "sine", "zero",
                  "custom_polynomial")


def make_potential(kind: str, **params) -> PotentialModel:
    """Factory used by config files: kind + numeric parameters."""
    if kind == "quadratic":
        return quadratic_model(a=float(params.pop("a", 1.0)),
                               d=int(params.pop("d", 1)))
    if kind == "quadratic_shifted":
        return quadratic_model(a=float(params.pop("a", 1.0)),
                               d=int(params.pop("d", 1)),
                               shift=params.pop("b", 0.0))
    if kind == "sine":
        return sine_model(eps=float(params.pop("eps", 0.2)),
                          d=int(params.pop("d", 1)))
    if kind == "zero":
        return zero_model(d=int(params.pop("d", 1)))
    if kind == "custom_polynomial":
        return polynomial_model(params.pop("coeffs"))
    raise ValueError(f"unknown potential kind {kind!r}; "
                     f"expected one of {_BUILTIN_KINDS}")


# ---------------------------------------------------------------------------
# The curvature field and its two derivation routes
# ---------------------------------------------------------------------------

def reciprocal_potential(model: PotentialModel, t, z) -> np.ndarray:
    """script_U(t, z) = (1/2)|grad U|^2 - (1/2) Lap U - dU/dt."""
    z = _as_points(z, model.d)
    g = np.asarray(model.grad_U(t, z), dtype=float)
    if not np.all(np.isfinite(g)):
        raise EvaluationError("grad_U", f"at t={t}")
    lap = np.asarray(model.laplacian_U(t, z), dtype=float)
    if not np.all(np.isfinite(lap)):
        raise EvaluationError("laplacian_U", f"at t={t}")
    dt = np.asarray(model.dt_U(t, z), dtype=float)
    if not np.all(np.isfinite(dt)):
        raise EvaluationError("dt_U", f"at t={t}")
    return 0.5 * np.sum(g * g, axis=-1) - 0.5 * lap - dt


def reciprocal_characteristic(model: PotentialModel, t, z) -> np.ndarray:
    """grad script_U: closed form if the model carries one, else central FD."""
    z = _as_points(z, model.d)
    if model.grad_script_U is not None:
        out = np.asarray(model.grad_script_U(t, z), dtype=float)
        if not np.all(np.isfinite(out)):
            raise EvaluationError("grad_script_U", f"at t={t}")
        return out
    h = model.fd_step(z)
    out = np.empty_like(z)
    for i in range(model.d):
        dz = np.zeros_like(z)
        dz[..., i] = h
        plus = reciprocal_potential(model, t, z + dz)
        minus = reciprocal_potential(model, t, z - dz)
        out[..., i] = (plus - minus) / (2.0 * h)
    return out


def reciprocal_characteristic_via_generator(model: PotentialModel, t, z) -> np.ndarray:
    """grad script_U along the generator route.

    Component i equals (Hess U . grad U)_i - (1/2)(grad Lap U)_i
    - d/dt (grad U)_i; third derivatives come from the model's closed forms
    or from central differences of grad_U.
    """
    z = _as_points(z, model.d)
    g = np.asarray(model.grad_U(t, z), dtype=float)

    if model.hessian_U is not None:
        hess = np.asarray(model.hessian_U(t, z), dtype=float)
    else:
        h = model.fd_step(z)
        hess = np.empty(z.shape[:-1] + (model.d, model.d))
        for j in range(model.d):
            dz = np.zeros_like(z)
            dz[..., j] = h
            gp = np.asarray(model.grad_U(t, z + dz), dtype=float)
            gm = np.asarray(model.grad_U(t, z - dz), dtype=float)
            hess[..., :, j] = (gp - gm) / (2.0 * h[..., None])

    if model.grad_laplacian_U is not None:
        glap = np.asarray(model.grad_laplacian_U(t, z), dtype=float)
    else:
        h = model.fd_step(z)
        glap = np.zeros_like(z)
        g0 = g
        for j in range(model.d):
            dz = np.zeros_like(z)
            dz[..., j] = h
            gp = np.asarray(model.grad_U(t, z + dz), dtype=float)
            gm = np.asarray(model.grad_U(t, z - dz), dtype=float)
            glap = glap + (gp - 2.0 * g0 + gm) / (h[..., None] ** 2)

    if model.time_homogeneous:
        dtg = np.zeros_like(z)
    elif model.dt_grad_U is not None:
        dtg = np.asarray(model.dt_grad_U(t, z), dtype=float)
    else:
        ht = model.h_fd
        gp = np.asarray(model.grad_U(t + ht, z), dtype=float)
        gm = np.asarray(model.grad_U(t - ht, z), dtype=float)
        dtg = (gp - gm) / (2.0 * ht)

    out = np.einsum("...ij,...j->...i", hess, g) - 0.5 * glap - dtg
    if not np.all(np.isfinite(out)):
        raise EvaluationError("generator route", f"at t={t}")
    return out


# ---------------------------------------------------------------------------
# Convexity certificate for the curvature field
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvexityCertificate:
    """Grid evidence that Hess script_U >= alpha_hat^2 I on a box.

    alpha_hat = sqrt(max(0, lambda_min)) where lambda_min is the smallest
    Hessian eigenvalue seen on the scan grid; a certificate is evidence on
    the scanned region only, never a global proof.
    """

    region: np.ndarray
    resolution: int
    alpha_hat: float
    min_eigenvalue: float
    min_location: np.ndarray

    @property
    def positive(self) -> bool:
        return self.alpha_hat > 0.0


def convexity_certificate(model: PotentialModel, region, resolution: int = 32,
                          t: float = 0.0) -> ConvexityCertificate:
    """Scan Hess script_U on a box grid by central second differences.

    ``region`` is a (d, 2) array of per-axis bounds.  Degenerate boxes are
    rejected.  Requires a time-homogeneous model: a certificate frozen at one
    time says nothing about others.
    """
    if not model.time_homogeneous:
        raise PreconditionError("certificate requires a time-homogeneous model")
    region = np.atleast_2d(np.asarray(region, dtype=float))
    if region.shape != (model.d, 2):
        raise ValueError(f"region must have shape ({model.d}, 2)")
    if np.any(region[:, 1] <= region[:, 0]):
        raise ValueError("degenerate region: every axis needs hi > lo")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")

    axes = [np.linspace(lo, hi, resolution) for lo, hi in region]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)  # (n_pts, d)
    h = model.fd_step(pts)
    d = model.d

    hess = np.empty((pts.shape[0], d, d))
    for i in range(d):
        ei = np.zeros((1, d))
        ei[0, i] = 1.0
        hi_ = h[:, None] * ei
        centre = reciprocal_potential(model, t, pts)
        hess[:, i, i] = (reciprocal_potential(model, t, pts + hi_)
                         - 2.0 * centre
                         + reciprocal_potential(model, t, pts - hi_)) / h ** 2
        for j in range(i + 1, d):
            ej = np.zeros((1, d))
            ej[0, j] = 1.0
            hj_ = h[:, None] * ej
            mixed = (reciprocal_potential(model, t, pts + hi_ + hj_)
                     - reciprocal_potential(model, t, pts + hi_ - hj_)
                     - reciprocal_potential(model, t, pts - hi_ + hj_)
                     + reciprocal_potential(model, t, pts - hi_ - hj_)) / (4.0 * h ** 2)
            hess[:, i, j] = mixed
            hess[:, j, i] = mixed

    eigvals = np.linalg.eigvalsh(hess)[:, 0]
    k = int(np.argmin(eigvals))
    lam_min = float(eigvals[k])
    return ConvexityCertificate(region=region, resolution=resolution,
                                alpha_hat=float(np.sqrt(max(lam_min, 0.0))),
                                min_eigenvalue=lam_min,
                                min_location=pts[k].copy())
