"""Drift fields ``u(x, t)`` and a small catalog with known regularity.

Every field evaluates on batches: ``eval(x, t)`` takes ``x`` of shape
``(..., d)`` and a scalar (or broadcastable) time and returns ``(..., d)``;
``grad`` returns ``(..., d, d)`` with ``grad[..., i, j] = d u_i / d x_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn

from .exponents import INF


class UnknownFieldError(KeyError):
    pass


@dataclass(frozen=True)
class DriftField:
    name: str
    d: int
    eval: Callable
    grad: Optional[Callable] = None
    divergence: Optional[Callable] = None
    support_box: Optional[np.ndarray] = None
    known_norm: Optional[Callable] = None
    divergence_free: bool = False
    time_dependent: bool = False
    params: dict = field(default_factory=dict)
    # optional analytic companions (vorticity, pressure, time derivative, laplacian)
    extras: dict = field(default_factory=dict)

    def __call__(self, x, t=0.0):
        return self.eval(x, t)

    def scaled(self, c: float) -> "DriftField":
        """The field ``c * u``; norms scale by ``|c|``."""
        ev, gr, dv, kn = self.eval, self.grad, self.divergence, self.known_norm
        return DriftField(
            name=f"{c}*{self.name}",
            d=self.d,
            eval=lambda x, t=0.0: c * ev(x, t),
            grad=None if gr is None else (lambda x, t=0.0: c * gr(x, t)),
            divergence=None if dv is None else (lambda x, t=0.0: c * dv(x, t)),
            support_box=self.support_box,
            known_norm=None if kn is None else (lambda r, q, T=1.0: abs(c) * kn(r, q, T)),
            divergence_free=self.divergence_free,
            time_dependent=self.time_dependent,
            params=dict(self.params, scale=c),
        )


def _time_factor(q, T):
    return 1.0 if math.isinf(q) else T ** (1.0 / q)


def _zeros_like_vec(x):
    return np.zeros(np.shape(x), dtype=float)


def _broadcast_t(x, t):
    return np.broadcast_to(np.asarray(t, dtype=float), np.shape(x)[:-1])


def zero(d: int = 1) -> DriftField:
    def ev(x, t=0.0):
        return _zeros_like_vec(x)

    def gr(x, t=0.0):
        x = np.asarray(x)
        return np.zeros(x.shape + (x.shape[-1],))

    return DriftField(
        "zero",
        d,
        ev,
        gr,
        lambda x, t=0.0: np.zeros(np.shape(x)[:-1]),
        support_box=np.array([[-1.0, 1.0]] * d),
        known_norm=lambda r, q, T=1.0: 0.0,
        divergence_free=True,
    )


def constant(c) -> DriftField:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    d = c.size

    def ev(x, t=0.0):
        return np.broadcast_to(c, np.shape(x)).copy()

    def gr(x, t=0.0):
        x = np.asarray(x)
        return np.zeros(x.shape + (d,))

    return DriftField(
        "constant",
        d,
        ev,
        gr,
        lambda x, t=0.0: np.zeros(np.shape(x)[:-1]),
        divergence_free=True,
        params={"c": c.tolist()},
    )


def linear(A) -> DriftField:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    if A.shape != (d, d):
        raise ValueError(f"linear drift needs a square matrix, got shape {A.shape}")
    tr = float(np.trace(A))

    def ev(x, t=0.0):
        return np.asarray(x, dtype=float) @ A.T

    def gr(x, t=0.0):
        x = np.asarray(x)
        return np.broadcast_to(A, x.shape[:-1] + (d, d)).copy()

    return DriftField(
        "linear",
        d,
        ev,
        gr,
        lambda x, t=0.0: np.full(np.shape(x)[:-1], tr),
        divergence_free=abs(tr) < 1e-15,
        params={"A": A.tolist()},
    )


def smooth_bump(d: int = 1, amplitude: float = 1.0, width: float = 1.0, direction=None) -> DriftField:
    """``u(x) = amplitude * exp(-|x|^2 / width^2) * e`` for a fixed unit vector ``e``."""
    if direction is None:
        e = np.ones(d) / math.sqrt(d)
    else:
        e = np.asarray(direction, dtype=float)
        e = e / np.linalg.norm(e)
    w2 = width**2

    def profile(x):
        x = np.asarray(x, dtype=float)
        return amplitude * np.exp(-np.sum(x * x, axis=-1) / w2)

    def ev(x, t=0.0):
        return profile(x)[..., None] * e

    def gr(x, t=0.0):
        x = np.asarray(x, dtype=float)
        g = profile(x)[..., None] * (-2.0 * x / w2)
        return e[:, None] * g[..., None, :]

    def div(x, t=0.0):
        x = np.asarray(x, dtype=float)
        return profile(x) * (-2.0 / w2) * (x @ e)

    def known(r, q, T=1.0):
        if math.isinf(r):
            s = abs(amplitude)
        else:
            s = abs(amplitude) * (math.pi * w2 / r) ** (d / (2.0 * r))
        return s * _time_factor(q, T)

    return DriftField(
        "smooth_bump",
        d,
        ev,
        gr,
        div,
        known_norm=known,
        params={"amplitude": amplitude, "width": width, "direction": e.tolist()},
    )


@dataclass(frozen=True)
class Hamiltonian:
    """``H(x)`` on ``R^{2n}`` with ``x = (q, p)``; gradient and Hessian are analytic."""

    name: str
    n: int
    value: Callable
    grad: Callable
    hess: Callable


def harmonic_hamiltonian(n: int = 1) -> Hamiltonian:
    def hess(x):
        x = np.asarray(x)
        return np.broadcast_to(np.eye(2 * n), x.shape[:-1] + (2 * n, 2 * n)).copy()

    return Hamiltonian(
        "harmonic",
        n,
        lambda x: 0.5 * np.sum(np.asarray(x) ** 2, axis=-1),
        lambda x: np.asarray(x, dtype=float).copy(),
        hess,
    )


def gaussian_hamiltonian(n: int = 1, amplitude: float = 1.0, width: float = 1.0) -> Hamiltonian:
    w2 = width**2

    def value(x):
        x = np.asarray(x, dtype=float)
        return amplitude * np.exp(-np.sum(x * x, axis=-1) / w2)

    def grad(x):
        x = np.asarray(x, dtype=float)
        return value(x)[..., None] * (-2.0 * x / w2)

    def hess(x):
        x = np.asarray(x, dtype=float)
        outer = x[..., :, None] * x[..., None, :]
        return value(x)[..., None, None] * (4.0 * outer / w2**2 - 2.0 * np.eye(2 * n) / w2)

    return Hamiltonian("gaussian", n, value, grad, hess)


HAMILTONIANS = {"harmonic": harmonic_hamiltonian, "gaussian": gaussian_hamiltonian}


def symplectic_matrix(n: int) -> np.ndarray:
    I = np.eye(n)
    Z = np.zeros((n, n))
    return np.block([[Z, I], [-I, Z]])


def hamiltonian(H: Hamiltonian) -> DriftField:
    """``u = J grad H``; always divergence free."""
    J = symplectic_matrix(H.n)
    d = 2 * H.n

    def ev(x, t=0.0):
        return H.grad(x) @ J.T

    def gr(x, t=0.0):
        return J @ H.hess(x)

    return DriftField(
        "hamiltonian",
        d,
        ev,
        gr,
        lambda x, t=0.0: np.zeros(np.shape(x)[:-1]),
        divergence_free=True,
        params={"H": H.name},
        extras={"hamiltonian": H},
    )


def taylor_green_backward(nu: float = 0.1, T: float = 1.0, amplitude: float = 1.0) -> DriftField:
    """Taylor-Green vortex solving the backward Navier-Stokes system.

    The forward solution ``v(x, s) = exp(-2 nu s) (sin x cos y, -cos x sin y)``
    is evaluated at ``s = T - t``, which gives a classical solution of
    ``u_t + (Du)u + grad P + nu Lap u = 0``, ``div u = 0`` with
    ``P = a^2 (cos 2x + cos 2y) / 4``.
    """

    def a(t):
        return amplitude * np.exp(-2.0 * nu * (T - np.asarray(t, dtype=float)))

    def ev(x, t=0.0):
        x = np.asarray(x, dtype=float)
        X, Y = x[..., 0], x[..., 1]
        at = a(t)
        return np.stack([at * np.sin(X) * np.cos(Y), -at * np.cos(X) * np.sin(Y)], axis=-1)

    def gr(x, t=0.0):
        x = np.asarray(x, dtype=float)
        X, Y = x[..., 0], x[..., 1]
        at = np.broadcast_to(a(t), X.shape)
        cc = at * np.cos(X) * np.cos(Y)
        ss = at * np.sin(X) * np.sin(Y)
        return np.stack([np.stack([cc, -ss], -1), np.stack([ss, -cc], -1)], -2)

    def vort(x, t=0.0):
        x = np.asarray(x, dtype=float)
        return 2.0 * a(t) * np.sin(x[..., 0]) * np.sin(x[..., 1])

    def pressure(x, t=0.0):
        x = np.asarray(x, dtype=float)
        return 0.25 * a(t) ** 2 * (np.cos(2 * x[..., 0]) + np.cos(2 * x[..., 1]))

    def u_t(x, t=0.0):
        return 2.0 * nu * ev(x, t)

    def lap(x, t=0.0):
        return -2.0 * ev(x, t)

    return DriftField(
        "taylor_green_backward",
        2,
        ev,
        gr,
        lambda x, t=0.0: np.zeros(np.shape(x)[:-1]),
        divergence_free=True,
        time_dependent=True,
        params={"nu": nu, "T": T, "amplitude": amplitude},
        extras={"vorticity": vort, "pressure": pressure, "time_derivative": u_t, "laplacian": lap},
    )


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)


def _sphere_area(d):
    return 2.0 * math.pi ** (d / 2.0) / gamma_fn(d / 2.0)


def truncated_singular(d=1, beta=0.25, cutoff=0.1, radius=1.0, r=None, q=None) -> DriftField:
    """``|x|^{-beta} e_1`` with an even polynomial cap for ``|x| < cutoff``
    and a C^2 smoothstep roll-off on ``radius <= |x| <= 2 radius``.

    The uncapped profile lies in ``L^r`` near the origin exactly when
    ``beta * r < d``; pass ``r`` to have that checked.  ``known_norm`` is
    the norm of the capped field (a radial 1-D integral); the uncapped
    value is available as ``params['singular_norm']``.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if not 0 < cutoff < radius:
        raise ValueError("need 0 < cutoff < radius")
    if r is not None and not math.isinf(r) and beta * r >= d:
        raise ValueError(f"beta={beta} >= d/r={d / r}: uncapped field is not in L^{r}")
    if r is not None and math.isinf(r) and beta > 0:
        raise ValueError("uncapped singular field is unbounded; r = inf is not admissible")
    eps = cutoff
    # P(rho) = c0 + c1 rho^2 + c2 rho^4 matching value, slope, curvature of rho^-beta at eps
    M = np.array(
        [[1.0, eps**2, eps**4], [0.0, 2 * eps, 4 * eps**3], [0.0, 2.0, 12 * eps**2]]
    )
    rhs = np.array(
        [eps**-beta, -beta * eps ** (-beta - 1), beta * (beta + 1) * eps ** (-beta - 2)]
    )
    c0, c1, c2 = np.linalg.solve(M, rhs)

    def profile(rho):
        rho = np.asarray(rho, dtype=float)
        inner = c0 + c1 * rho**2 + c2 * rho**4
        with np.errstate(divide="ignore"):
            outer = np.where(rho > 0, rho, 1.0) ** (-beta)
        g = np.where(rho < eps, inner, outer)
        return g * (1.0 - _smoothstep((rho - radius) / radius))

    e1 = np.zeros(d)
    e1[0] = 1.0

    def ev(x, t=0.0):
        x = np.asarray(x, dtype=float)
        return profile(np.linalg.norm(x, axis=-1))[..., None] * e1

    area = _sphere_area(d)

    def known(rr, qq, T=1.0):
        if math.isinf(rr):
            val = max(c0, float(profile(np.array(eps))))
        else:
            pts = [eps, radius]
            val = area * quad(
                lambda s: float(profile(s)) ** rr * s ** (d - 1),
                0.0,
                2 * radius,
                points=pts,
                epsabs=0.0,
                epsrel=1e-12,
                limit=400,
            )[0]
            val = val ** (1.0 / rr)
        return val * _time_factor(qq, T)

    def singular_norm(rr, qq, T=1.0):
        # uncapped, hard-truncated at |x| = radius
        if math.isinf(rr) or beta * rr >= d:
            return INF
        val = (area * radius ** (d - beta * rr) / (d - beta * rr)) ** (1.0 / rr)
        return val * _time_factor(qq, T)

    return DriftField(
        "truncated_singular",
        d,
        ev,
        None,
        None,
        support_box=np.array([[-2.0 * radius, 2.0 * radius]] * d),
        known_norm=known,
        params={
            "beta": beta,
            "cutoff": cutoff,
            "radius": radius,
            "cap": (c0, c1, c2),
            "singular_norm": singular_norm,
        },
    )


CATALOG_NAMES = (
    "zero",
    "constant",
    "linear",
    "smooth_bump",
    "hamiltonian",
    "taylor_green_backward",
    "truncated_singular",
)


def catalog_field(name: str, **params) -> DriftField:
    """Build a catalog drift by name.

    >>> catalog_field("linear", A=[[0, 1], [-1, 0]]).divergence_free
    True
    """
    if name == "zero":
        return zero(params.get("d", 1))
    if name == "constant":
        return constant(params["c"])
    if name == "linear":
        return linear(params["A"])
    if name == "smooth_bump":
        return smooth_bump(**params)
    if name == "hamiltonian":
        H = params.get("H", "harmonic")
        if isinstance(H, str):
            try:
                builder = HAMILTONIANS[H]
            except KeyError:
                raise UnknownFieldError(f"unknown Hamiltonian {H!r}") from None
            H = builder(**{k: v for k, v in params.items() if k != "H"})
        return hamiltonian(H)
    if name == "taylor_green_backward":
        return taylor_green_backward(**params)
    if name == "truncated_singular":
        return truncated_singular(**params)
    raise UnknownFieldError(f"unknown catalog field {name!r}; choose from {CATALOG_NAMES}")
