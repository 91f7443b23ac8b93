"""Pullbacks of differential forms under stochastic flows and martingale tests.

A 1-form ``w . dx`` is stored through its coefficient vector ``w(x, t)``.
Its pullback by the flow is ``(D_aX)^T w(X(a, t), t)``, a coefficient field
on initial coordinates; pairing it with a compactly supported test vector
field ``V`` gives a scalar process per path whose martingale property is
tested statistically by :func:`martingale_statistic`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.stats import norm

from .estimators import MissingJacobianError
from .fields import DriftField, symplectic_matrix
from .flow import FlowEnsemble, iter_flow_batches


class SupportNotCoveredError(ValueError):
    pass


class MissingDerivativeError(ValueError):
    pass


class OddDimensionError(ValueError):
    pass


class NotDivergenceFreeError(ValueError):
    pass


class MissingVorticityError(ValueError):
    pass


class InsufficientSamplesError(ValueError):
    pass


# ----------------------------------------------------------------------------
# grids, forms and test fields


def _trapezoid_weights(x):
    w = np.zeros_like(x)
    dx = np.diff(x)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


@dataclass(frozen=True)
class TensorGrid:
    """Tensor-product lattice of initial points with trapezoid weights."""

    axes: tuple

    @classmethod
    def box(cls, lo, hi, n):
        lo, hi = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float))
        n = np.broadcast_to(n, lo.shape)
        return cls(tuple(np.linspace(l, h, int(k)) for l, h, k in zip(lo, hi, n)))

    @property
    def d(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def points(self):
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), -1).reshape(-1, self.d)

    @property
    def weights(self):
        w = _trapezoid_weights(self.axes[0])
        for a in self.axes[1:]:
            w = np.multiply.outer(w, _trapezoid_weights(a))
        return w.reshape(-1)

    @property
    def bounds(self):
        return np.array([a[0] for a in self.axes]), np.array([a[-1] for a in self.axes])

    def refined(self, factor=2):
        return TensorGrid(tuple(np.linspace(a[0], a[-1], factor * (len(a) - 1) + 1) for a in self.axes))


@dataclass
class OneForm:
    """``w(x, t) . dx`` with optional analytic derivatives.

    ``dw(x, t)[..., i, j] = d w_i / d x_j``; ``wt`` is the time derivative and
    ``lap`` the componentwise Laplacian.  A missing ``wt`` means the form is
    static.
    """

    name: str
    d: int
    w: Callable
    dw: Callable | None = None
    wt: Callable | None = None
    lap: Callable | None = None
    exact: bool = False
    divergence_free: bool = False

    def exterior_derivative(self, x, t=0.0):
        """Antisymmetric matrix ``F[i, j] = d_i w_j - d_j w_i``."""
        if self.dw is None:
            raise MissingDerivativeError(f"form {self.name!r} has no analytic gradient")
        G = self.dw(x, t)
        return np.swapaxes(G, -1, -2) - G


def constant_form(c) -> OneForm:
    c = np.asarray(c, dtype=float)
    d = c.size
    zero_grad = lambda x, t=0.0: np.zeros(np.shape(x)[:-1] + (d, d))
    return OneForm(
        "constant",
        d,
        lambda x, t=0.0: np.broadcast_to(c, np.shape(x)).copy(),
        zero_grad,
        lap=lambda x, t=0.0: np.zeros(np.shape(x)),
        exact=True,
        divergence_free=True,
    )


def linear_form(B) -> OneForm:
    """``w(x) = B x``; exact when ``B`` is symmetric."""
    B = np.asarray(B, dtype=float)
    d = B.shape[0]
    return OneForm(
        "linear",
        d,
        lambda x, t=0.0: np.asarray(x, float) @ B.T,
        lambda x, t=0.0: np.broadcast_to(B, np.shape(x)[:-1] + (d, d)).copy(),
        lap=lambda x, t=0.0: np.zeros(np.shape(x)),
        exact=bool(np.allclose(B, B.T)),
        divergence_free=bool(abs(np.trace(B)) < 1e-14),
    )


def gaussian_form(c, center=None, scale=1.0, rate=0.0) -> OneForm:
    """``w(x, t) = exp(rate t) exp(-|x - x0|^2 / s^2) c`` with all derivatives in closed form."""
    c = np.asarray(c, dtype=float)
    d = c.size
    x0 = np.zeros(d) if center is None else np.asarray(center, float)
    s2 = scale * scale

    def g(x, t):
        y = np.asarray(x, float) - x0
        return np.exp(rate * np.asarray(t, float)) * np.exp(-np.sum(y * y, -1) / s2), y

    def w(x, t=0.0):
        phi, _ = g(x, t)
        return phi[..., None] * c

    def dw(x, t=0.0):
        phi, y = g(x, t)
        grad = phi[..., None] * (-2 * y / s2)
        return c[:, None] * grad[..., None, :]

    def lap(x, t=0.0):
        phi, y = g(x, t)
        L = phi * (4 * np.sum(y * y, -1) / s2**2 - 2 * d / s2)
        return L[..., None] * c

    return OneForm("gaussian", d, w, dw, lambda x, t=0.0: rate * w(x, t), lap)


def canonical_form(n=1) -> OneForm:
    """``p . dq`` on ``R^{2n}`` with ``x = (q, p)``."""
    d = 2 * n
    G = np.zeros((d, d))
    G[np.arange(n), n + np.arange(n)] = 1.0

    def w(x, t=0.0):
        x = np.asarray(x, float)
        return np.concatenate([x[..., n:], np.zeros_like(x[..., n:])], -1)

    return OneForm(
        "p_dq",
        d,
        w,
        lambda x, t=0.0: np.broadcast_to(G, np.shape(x)[:-1] + (d, d)).copy(),
        lap=lambda x, t=0.0: np.zeros(np.shape(x)),
    )


def field_form(drift: DriftField) -> OneForm:
    """``alpha^t = u(., t) . dx``; uses the field's analytic extras when present."""
    ex = drift.extras
    return OneForm(
        f"alpha[{drift.name}]",
        drift.d,
        drift.eval,
        drift.grad,
        ex.get("time_derivative") if drift.time_dependent else None,
        ex.get("laplacian"),
        divergence_free=drift.divergence_free,
    )


@dataclass
class TestVectorField:
    """Compactly supported ``C^1`` vector field with analytic divergence."""

    __test__ = False  # not a pytest class

    name: str
    d: int
    V: Callable
    divV: Callable
    support_box: tuple
    divergence_free: bool = False
    params: dict = field(default_factory=dict)


def bump_vector_field(center, radius=1.0, direction=None, amplitude=1.0) -> TestVectorField:
    """``V = A (1 - |x - c|^2 / R^2)_+^3 e``."""
    c = np.asarray(center, float)
    d = c.size
    e = np.ones(d) / np.sqrt(d) if direction is None else np.asarray(direction, float)
    R2 = radius * radius

    def base(x):
        y = np.asarray(x, float) - c
        s = np.clip(1 - np.sum(y * y, -1) / R2, 0, None)
        return s, y

    def V(x):
        s, _ = base(x)
        return (amplitude * s**3)[..., None] * e

    def divV(x):
        s, y = base(x)
        return amplitude * 3 * s**2 * (-2 / R2) * (y @ e)

    return TestVectorField("bump", d, V, divV, (c - radius, c + radius), False,
                           dict(center=c.tolist(), radius=radius, direction=e.tolist(), amplitude=amplitude))


def stream_vector_field(center, radius=1.0, amplitude=1.0) -> TestVectorField:
    """Divergence-free ``Z = (-psi_y, psi_x)`` for ``psi = A (1 - |x - c|^2 / R^2)_+^4`` in 2-D."""
    c = np.asarray(center, float)
    if c.size != 2:
        raise ValueError("stream-function fields are two-dimensional")
    R2 = radius * radius

    def Z(x):
        y = np.asarray(x, float) - c
        s = np.clip(1 - np.sum(y * y, -1) / R2, 0, None)
        g = amplitude * 4 * s**3 * (-2 / R2)  # dpsi = g * y
        return np.stack([-g * y[..., 1], g * y[..., 0]], -1)

    return TestVectorField("stream", 2, Z, lambda x: np.zeros(np.shape(x)[:-1]), (c - radius, c + radius), True,
                           dict(center=c.tolist(), radius=radius, amplitude=amplitude))


# ----------------------------------------------------------------------------
# pullbacks and pairings


def _require_jacobians(ensemble):
    if ensemble.jacobians is None:
        raise MissingJacobianError("pullbacks need jacobians")


def _pull(J, v):
    # J^T v over the trailing axes
    return np.einsum("...ji,...j->...i", J, v)


def pullback_one_form(ensemble: FlowEnsemble, form: OneForm, t):
    """Coefficients ``(D_aX)^T w(X(a, t), t)``, shape ``(paths, points, d)``."""
    _require_jacobians(ensemble)
    i = ensemble.time_index(t)
    return _pull(ensemble.jacobians[:, i], form.w(ensemble.positions[:, i], ensemble.times[i]))


def check_support(grid: TensorGrid, V: TestVectorField, tol=1e-12):
    lo, hi = grid.bounds
    vlo, vhi = (np.asarray(b, float) for b in V.support_box)
    if np.any(vlo < lo - tol) or np.any(vhi > hi + tol):
        raise SupportNotCoveredError(f"support {V.support_box} of {V.name!r} is not inside the lattice box {(lo, hi)}")


def pairing(coefficients, grid: TensorGrid, V: TestVectorField):
    """Trapezoid quadrature of ``int c(a) . V(a) da`` over the lattice (leading axes kept)."""
    check_support(grid, V)
    c = np.asarray(coefficients, float)
    pts = grid.points
    if c.shape[-2:] != pts.shape:
        raise ValueError(f"coefficients of shape {c.shape} do not live on a lattice of {pts.shape[0]} points")
    return np.einsum("...pi,pi,p->...", c, V.V(pts), grid.weights)


# ----------------------------------------------------------------------------
# martingale statistics


@dataclass
class MartingaleReport:
    times: np.ndarray
    mean_increments: np.ndarray
    stderr: np.ndarray
    z: np.ndarray
    max_abs_z: float
    threshold: float
    level: float
    n_paths: int
    verdict: str  # "pass", "fail" or "trivially constant"

    @property
    def passed(self):
        return self.verdict != "fail"


def martingale_statistic(samples, times, level=0.05, min_paths=10_000, min_times=5, rtol=1e-12) -> MartingaleReport:
    """Bonferroni z-tests for zero-mean increments of a per-path process.

    ``samples`` has shape ``(paths, times)``.  Increments whose sample variance
    vanishes are degenerate: a zero mean gives ``z = 0`` and a nonzero mean
    ``z = inf``.  If every increment is degenerate and zero the verdict is
    ``"trivially constant"``.
    """
    Y = np.asarray(samples, float)
    Y = Y[np.all(np.isfinite(Y), axis=1)]  # flagged paths carry NaN
    times = np.asarray(times, float)
    n, m = Y.shape
    if m != times.size:
        raise ValueError("samples and times disagree")
    if m < min_times:
        raise InsufficientSamplesError(f"need at least {min_times} test times, got {m}")
    if n < min_paths:
        raise InsufficientSamplesError(f"need at least {min_paths} paths, got {n}")
    dY = np.diff(Y, axis=1)
    mean = dY.mean(axis=0)
    se = dY.std(axis=0, ddof=1) / np.sqrt(n)
    scale = np.max(np.abs(Y)) + 1.0
    degenerate = se <= rtol * scale
    zero = np.abs(mean) <= rtol * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(degenerate, np.where(zero, 0.0, np.inf), mean / se)
    k = m - 1
    thr = float(norm.ppf(1 - level / (2 * k)))
    mx = float(np.max(np.abs(z)))
    if np.all(degenerate & zero):
        verdict = "trivially constant"
    else:
        verdict = "pass" if mx <= thr else "fail"
    return MartingaleReport(times, mean, se, z, mx, thr, level, n, verdict)


def planted_alternative(samples, times, slope):
    """Adds the deterministic drift ``slope * t`` to every path."""
    return np.asarray(samples, float) + slope * np.asarray(times, float)


def rejection_rate(samples, times, slope, n_boot=200, seed=0, level=0.05):
    """Bootstrap probability that the planted drift ``slope * t`` is rejected.

    The paths are first centred so the empirical law is an exact null, then
    the drift is planted and each replicate resamples paths with replacement.
    The rate estimates the power of :func:`martingale_statistic` at the given
    ensemble size; at ``slope = 0`` it estimates the test's size.
    """
    from .rng import stream

    Y = np.asarray(samples, float)
    Y = Y[np.all(np.isfinite(Y), axis=1)]
    Y = planted_alternative(Y - Y.mean(axis=0), times, slope)
    n = Y.shape[0]
    rng = stream(seed, 0)
    hits = 0
    for _ in range(n_boot):
        idx = rng.integers(0, n, n)
        hits += martingale_statistic(Y[idx], times, level, min_paths=0).verdict == "fail"
    return hits / n_boot


# ----------------------------------------------------------------------------
# processes


def _nu(ensemble, nu):
    return 0.5 * ensemble.metadata["sigma"] ** 2 if nu is None else nu


def pullback_martingale_process(ensemble: FlowEnsemble, form: OneForm, drift: DriftField, V: TestVectorField,
                      grid: TensorGrid, nu=None):
    """Weak form of ``M_t(V)`` for the pulled-back form, shape ``(paths, times)``.

    ``M_t = <X_t^* b^t - b^0, V> - int_0^t <X_s^*[b_t + i_u d b + nu Lap b], V> ds
    + int_0^t int (w . u)(X_s) div V da ds``; the last term is the
    integrated-by-parts exact part of the Lie derivative, so only values of
    ``u`` are needed.  ``nu`` defaults to ``sigma^2 / 2``.
    """
    _require_jacobians(ensemble)
    if form.dw is None or form.lap is None:
        raise MissingDerivativeError(f"form {form.name!r} needs analytic gradient and Laplacian")
    check_support(grid, V)
    nu = _nu(ensemble, nu)
    pts = grid.points
    Vp, divV, wts = V.V(pts), V.divV(pts), grid.weights
    T = ensemble.times
    pair = np.empty((ensemble.n_paths, T.size))
    rate = np.empty_like(pair)
    for k, t in enumerate(T):
        X, J = ensemble.positions[:, k], ensemble.jacobians[:, k]
        w, G, u = form.w(X, t), form.dw(X, t), drift.eval(X, t)
        forced = np.einsum("...ij,...j->...i", G, u) - np.einsum("...ji,...j->...i", G, u) + nu * form.lap(X, t)
        if form.wt is not None:
            forced = forced + form.wt(X, t)
        pair[:, k] = np.einsum("...pi,pi,p->...", _pull(J, w), Vp, wts)
        rate[:, k] = np.einsum("...pi,pi,p->...", _pull(J, forced), Vp, wts) - np.einsum(
            "...p,p,p->...", np.sum(w * u, -1), divV, wts
        )
    return pair - pair[:, :1] - cumulative_trapezoid(rate, T, axis=1, initial=0.0)


def symplectic_residual(ensemble: FlowEnsemble, t):
    """``|J^T Omega J - Omega|_F`` per path and initial point."""
    if ensemble.d % 2:
        raise OddDimensionError(f"symplectic residual needs even dimension, got {ensemble.d}")
    _require_jacobians(ensemble)
    Om = symplectic_matrix(ensemble.d // 2)
    J = ensemble.jacobians[:, ensemble.time_index(t)]
    R = np.swapaxes(J, -1, -2) @ Om @ J - Om
    return np.sqrt(np.sum(R * R, axis=(-2, -1)))


def circulation_process(ensemble: FlowEnsemble, drift: DriftField, Z: TestVectorField, grid: TensorGrid):
    """``int X_t^* alpha^t (Z) da`` per path and output time, ``alpha^t = u(., t) . dx``."""
    if not Z.divergence_free:
        raise NotDivergenceFreeError(f"test field {Z.name!r} is not divergence free")
    _require_jacobians(ensemble)
    check_support(grid, Z)
    pts = grid.points
    Zp, wts = Z.V(pts), grid.weights
    out = np.empty((ensemble.n_paths, ensemble.times.size))
    for k, t in enumerate(ensemble.times):
        c = _pull(ensemble.jacobians[:, k], drift.eval(ensemble.positions[:, k], t))
        out[:, k] = np.einsum("...pi,pi,p->...", c, Zp, wts)
    return out


def vorticity_process(ensemble: FlowEnsemble, drift: DriftField, full=False):
    """``omega(X(a, t), t)`` per path, output time and initial point.

    With ``full=True`` this is the complete 2-form pullback ``omega(X) det D_aX``.
    """
    omega = drift.extras.get("vorticity")
    if omega is None:
        raise MissingVorticityError(f"drift {drift.name!r} has no analytic vorticity")
    if ensemble.d != 2:
        raise ValueError("vorticity is defined here for d = 2")
    T = ensemble.times
    W = np.stack([omega(ensemble.positions[:, k], t) for k, t in enumerate(T)], axis=1)
    if full:
        _require_jacobians(ensemble)
        W = W * np.linalg.det(ensemble.jacobians)
    return W


def batched_process(process, drift: DriftField, lattice, initial_points, sigma, t_final, out_stride=1,
                    batch_size=256, jacobians=True):
    """Applies ``process(batch_ensemble)`` over path batches and stacks the per-path results.

    Keeps memory bounded for large ensembles where only the scalar process
    is needed.
    """
    parts = [process(b) for b in iter_flow_batches(drift, lattice, initial_points, sigma, t_final, out_stride,
                                                     batch_size, jacobians=jacobians)]
    return np.concatenate(parts, axis=0)


def ito_integral_process(ensemble: FlowEnsemble, form: OneForm, V: TestVectorField, grid: TensorGrid, lattice):
    """Left-point sums of ``sum_i int <X_s^* gamma_i^s, V> sigma dB^i`` on the output grid.

    ``gamma_i = w_{x^i} . dx``.  Needs every lattice step stored
    (``out_stride = 1``); paths are regenerated from ``lattice``.
    """
    _require_jacobians(ensemble)
    if form.dw is None:
        raise MissingDerivativeError(f"form {form.name!r} needs an analytic gradient")
    n = ensemble.times.size - 1
    if not np.allclose(np.diff(ensemble.times), lattice.dt):
        raise ValueError("ito_integral_process needs out_stride = 1")
    check_support(grid, V)
    pts = grid.points
    Vp, wts = V.V(pts), grid.weights
    sigma = ensemble.metadata["sigma"]
    dB = lattice.batch_increments(ensemble.path_indices, 0, n)
    out = np.zeros((ensemble.n_paths, n + 1))
    for k in range(n):
        X, J = ensemble.positions[:, k], ensemble.jacobians[:, k]
        G = form.dw(X, ensemble.times[k])  # (P, A, d, d), G[..., j, i] = d_i w_j
        dW = sigma * dB[:, k, None, :]
        incr = np.einsum("...ji,...j->...i", J, np.einsum("...ji,...i->...j", G, dW))
        out[:, k + 1] = out[:, k] + np.einsum("...pi,pi,p->...", incr, Vp, wts)
    return out
