"""Critical exponents and mixed space-time Lebesgue norms.

A drift ``u(x, t)`` is measured in the mixed norm

    ||u||_{r,q} = ( int_0^T ||u(., t)||_{L^r}^q dt )^{1/q}

and the pair ``(r, q)`` is admissible when ``delta1 > 0``.  Infinite
exponents are represented by ``math.inf`` and handled as exact limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

INF = math.inf


class DomainError(ValueError):
    """Exponent outside the range where the critical exponents are defined."""


class UnboundedSupportError(ValueError):
    """A norm was requested on a field with unbounded support and no truncation box."""


def _inv(p: float) -> float:
    return 0.0 if math.isinf(p) else 1.0 / p


@dataclass(frozen=True)
class Exponents:
    """Spatial dimension, integrability exponents and noise amplitude.

    ``nu`` is always ``sigma**2 / 2``.
    """

    d: int
    r: float
    q: float
    sigma: float = 1.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @classmethod
    def from_nu(cls, d, r, q, nu):
        return cls(d, r, q, math.sqrt(2.0 * nu))

    @property
    def nu(self) -> float:
        return 0.5 * self.sigma**2

    def _check(self):
        if not (math.isinf(self.r) or self.r > self.d):
            raise DomainError(f"need r > d (or r = inf), got r={self.r}, d={self.d}")
        if not (math.isinf(self.q) or self.q > 2):
            raise DomainError(f"need q > 2 (or q = inf), got q={self.q}")

    @property
    def is_admissible(self) -> bool:
        try:
            self._check()
        except DomainError:
            return False
        return True

    def delta1(self) -> float:
        self._check()
        return 0.5 - 0.5 * self.d * _inv(self.r) - _inv(self.q)

    def delta2(self) -> float:
        self._check()
        return 0.25 - 0.5 * self.d * _inv(self.r) - _inv(self.q)

    def is_subcritical(self) -> bool:
        return self.delta1() > 0

    def is_davie_regime(self) -> bool:
        return self.delta2() > 0


def delta1(exp: Exponents) -> float:
    """``1/2 - d/(2r) - 1/q``."""
    return exp.delta1()


def delta2(exp: Exponents) -> float:
    """``1/4 - d/(2r) - 1/q``."""
    return exp.delta2()


def _simpson_nd(values: np.ndarray, axes_coords) -> np.ndarray:
    # integrate trailing spatial axes, last first
    out = values
    for coords in reversed(axes_coords):
        out = simpson(out, x=coords, axis=-1)
    return out


def _norm_once(field, r, q, T, box, n_space, n_time):
    d = field.d
    axes = [np.linspace(lo, hi, n_space) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    times = np.linspace(0.0, T, n_time)
    spatial = np.empty(n_time)
    for k, t in enumerate(times):
        mag = np.linalg.norm(field.eval(pts, t), axis=-1).reshape((n_space,) * d)
        if math.isinf(r):
            spatial[k] = mag.max()
        else:
            spatial[k] = _simpson_nd(mag**r, axes) ** (1.0 / r)
    if math.isinf(q):
        return float(spatial.max())
    return float(simpson(spatial**q, x=times) ** (1.0 / q))


def mixed_norm(field, r, q, T=1.0, n_space=65, n_time=33, box=None):
    """Nested composite-Simpson approximation of ``||u||_{r,q}`` on ``[0, T]``.

    Returns ``(value, error)``.  The value is computed at the requested
    resolution and at roughly twice that resolution; the finer value is
    returned and the absolute difference of the two serves as a
    (conservative) error estimate.  ``r = inf`` or ``q = inf`` are grid
    maxima.

    ``box`` is a sequence of ``(lo, hi)`` pairs, one per dimension; it
    defaults to the field's support box.
    """
    if box is None:
        box = field.support_box
        if box is None:
            raise UnboundedSupportError(
                f"field {field.name!r} has unbounded support; pass a truncation box"
            )
    box = np.asarray(box, dtype=float).reshape(field.d, 2)
    if not (r > 0 and q > 0):
        raise DomainError(f"norm exponents must be positive, got r={r}, q={q}")
    if n_space < 3 or n_time < 3:
        raise ValueError("grid resolution must be at least 3 points per axis")
    # Simpson wants odd point counts
    n_space += (n_space + 1) % 2
    n_time += (n_time + 1) % 2
    if not field.time_dependent:
        n_time = 3
    coarse = _norm_once(field, r, q, T, box, n_space, n_time)
    fine = _norm_once(
        field, r, q, T, box, 2 * n_space - 1, n_time if not field.time_dependent else 2 * n_time - 1
    )
    return fine, abs(fine - coarse)
