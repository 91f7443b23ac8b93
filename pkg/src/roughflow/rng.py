"""Counter-based random streams.

Every stream is a numpy ``Philox`` generator keyed by ``(seed, index)``.
Brownian increments additionally fix the counter to the step number, so
``increments(path, step)`` can be regenerated in isolation and agrees
bit-for-bit with the same step drawn as part of a whole path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _key(seed, index):
    return np.array([int(seed) & _MASK64, int(index) & _MASK64], dtype=np.uint64)


def stream(seed, index=0) -> np.random.Generator:
    """Independent generator for work unit ``index`` under ``seed``."""
    return np.random.Generator(np.random.Philox(key=_key(seed, index)))


def _uniform_open(raw):
    # 53-bit uniforms on (0, 1]
    return ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53


@dataclass(frozen=True)
class BrownianLattice:
    """Reproducible Brownian increments for ``n_paths`` independent paths.

    Path ``p`` uses the Philox key ``(seed, p)``; step ``k`` consumes counter
    blocks ``k*b .. k*b + b - 1`` with ``b = ceil(2*ceil(d/2) / 4)``.
    Normals come from the Box-Muller transform.
    """

    dt: float
    n_steps: int
    d: int
    seed: int
    n_paths: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 0 or self.n_paths < 0 or self.d < 1:
            raise ValueError("invalid lattice shape")

    @property
    def _pairs(self):
        return (self.d + 1) // 2

    @property
    def _blocks_per_step(self):
        return math.ceil(2 * self._pairs / 4)

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.dt

    def _raw(self, path, start, stop):
        if not 0 <= path < self.n_paths:
            raise IndexError(f"path {path} outside [0, {self.n_paths})")
        if not 0 <= start <= stop <= self.n_steps:
            raise IndexError("step range outside lattice")
        n = stop - start
        bps = self._blocks_per_step
        bg = np.random.Philox(key=_key(self.seed, path), counter=np.array([start * bps, 0, 0, 0], dtype=np.uint64))
        return bg.random_raw(n * bps * 4).reshape(n, bps * 4)[:, : 2 * self._pairs]

    def _box_muller(self, raw):
        u = _uniform_open(raw)
        u1, u2 = u[..., 0::2], u[..., 1::2]
        rad = np.sqrt(-2.0 * np.log(u1))
        ang = 2.0 * math.pi * u2
        z = np.empty(raw.shape)
        z[..., 0::2] = rad * np.cos(ang)
        z[..., 1::2] = rad * np.sin(ang)
        return z[..., : self.d]

    def _normals(self, path, start, stop):
        return self._box_muller(self._raw(path, start, stop))

    def increments(self, path_index, step):
        """The increment ``B(t_{k+1}) - B(t_k)`` of one path as a ``d``-vector."""
        return math.sqrt(self.dt) * self._normals(path_index, step, step + 1)[0]

    def path_increments(self, path_index, start=0, stop=None):
        """Increments of steps ``start .. stop-1``, shape ``(stop-start, d)``."""
        stop = self.n_steps if stop is None else stop
        return math.sqrt(self.dt) * self._normals(path_index, start, stop)

    def batch_increments(self, paths, start=0, stop=None):
        """Increments for several paths, shape ``(len(paths), stop-start, d)``."""
        stop = self.n_steps if stop is None else stop
        raw = np.stack([self._raw(p, start, stop) for p in paths])
        return math.sqrt(self.dt) * self._box_muller(raw)

    def refined(self, factor=2):
        """Lattice with ``dt/factor`` built from fresh streams.

        Independent of this lattice; use :meth:`coarsen_increments` when a
        coupled coarse path is needed.
        """
        return BrownianLattice(self.dt / factor, self.n_steps * factor, self.d, self.seed, self.n_paths)


def coarsen_increments(dB, factor):
    """Sum consecutive groups of ``factor`` increments along axis -2."""
    n = dB.shape[-2]
    if n % factor:
        raise ValueError("step count not divisible by factor")
    return dB.reshape(*dB.shape[:-2], n // factor, factor, dB.shape[-1]).sum(axis=-2)
