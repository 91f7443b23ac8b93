"""Stochastic flows under common noise.

All initial points of one path index share the same Brownian increments,
so ``X(., t)`` is a random map of the initial lattice.  Positions follow
Euler-Maruyama,

    X_{k+1} = X_k + u(X_k, t_k) dt + sigma dB_k,

and the Jacobian ``D_aX`` solves ``dJ/dt = Du(X(t), t) J`` along the frozen
path.  Integration runs on the lattice step ``dt``; only every
``out_stride``-th step is stored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .fields import DriftField
from .rng import BrownianLattice


class MissingGradientError(ValueError):
    pass


class LatticeTooShortError(ValueError):
    pass


SCHEMES = ("heun", "euler")


@dataclass
class FlowEnsemble:
    """Trajectories on an output grid.

    Array layout: ``positions[path, time, point, :]``, ``jacobians[path,
    time, point, :, :]``; ``girsanov_log_weights[path, time, point]``.
    ``valid[path]`` is False for paths that produced non-finite values;
    their entries are NaN.
    """

    initial_points: np.ndarray
    times: np.ndarray
    positions: np.ndarray
    path_indices: np.ndarray
    valid: np.ndarray
    jacobians: np.ndarray | None = None
    inverse_jacobians: np.ndarray | None = None
    girsanov_log_weights: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_paths(self):
        return self.positions.shape[0]

    @property
    def n_flagged(self):
        return int(np.count_nonzero(~self.valid))

    @property
    def d(self):
        return self.positions.shape[-1]

    def time_index(self, t):
        i = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[i], t, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"time {t} is not on the output grid")
        return i

    def select(self, mask):
        """Sub-ensemble of the paths where ``mask`` is True."""
        pick = lambda a: None if a is None else a[mask]
        return replace(
            self,
            positions=self.positions[mask],
            path_indices=self.path_indices[mask],
            valid=self.valid[mask],
            jacobians=pick(self.jacobians),
            inverse_jacobians=pick(self.inverse_jacobians),
            girsanov_log_weights=pick(self.girsanov_log_weights),
        )

    def finite(self):
        return self.select(self.valid)


def _n_steps(lattice: BrownianLattice, t_final):
    n = int(round(t_final / lattice.dt))
    if not math.isclose(n * lattice.dt, t_final, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"t_final={t_final} is not a multiple of dt={lattice.dt}")
    if n > lattice.n_steps:
        raise LatticeTooShortError(f"lattice covers {lattice.n_steps * lattice.dt}, need {t_final}")
    return n


def output_steps(n, stride):
    steps = list(range(0, n + 1, max(1, int(stride))))
    if steps[-1] != n:
        steps.append(n)
    return np.asarray(steps)


def _as_points(a, d):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[-1] != d:
        raise ValueError(f"initial points must have {d} columns")
    return a


def _heun_step(J, D0, D1, dt, inverse):
    if inverse:
        pred = J - dt * J @ D0
        return J - 0.5 * dt * (J @ D0 + pred @ D1)
    pred = J + dt * D0 @ J
    return J + 0.5 * dt * (D0 @ J + D1 @ pred)


def _euler_step(J, D0, dt, inverse):
    if inverse:
        return J - dt * J @ D0
    return J + dt * D0 @ J


def _integrate(drift, lattice, points, sigma, n, stride, paths, jac=False, inv=False, scheme="heun"):
    """Core loop for one batch of paths; returns a dict of stored arrays."""
    d = lattice.d
    B, A = len(paths), points.shape[0]
    dB = lattice.batch_increments(paths, 0, n)  # (B, n, d)
    steps = output_steps(n, stride)
    store = {int(s): i for i, s in enumerate(steps)}
    out_X = np.empty((B, len(steps), A, d))
    X = np.broadcast_to(points, (B, A, d)).copy()
    out_X[:, 0] = X
    eye = np.eye(d)
    if jac or inv:
        if drift.grad is None:
            raise MissingGradientError(f"drift {drift.name!r} has no analytic gradient")
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
    J = np.broadcast_to(eye, (B, A, d, d)).copy() if jac else None
    K = np.broadcast_to(eye, (B, A, d, d)).copy() if inv else None
    out_J = np.empty((B, len(steps), A, d, d)) if jac else None
    out_K = np.empty((B, len(steps), A, d, d)) if inv else None
    if jac:
        out_J[:, 0] = J
    if inv:
        out_K[:, 0] = K
    valid = np.ones(B, dtype=bool)
    dt = lattice.dt
    D0 = drift.grad(X, 0.0) if (jac or inv) else None
    with np.errstate(all="ignore"):
        for k in range(n):
            t = k * dt
            u = drift.eval(X, t)
            noise = sigma * dB[:, k, None, :]
            Xn = X + u * dt + noise
            if jac or inv:
                D1 = drift.grad(Xn, t + dt)
                if scheme == "heun":
                    if jac:
                        J = _heun_step(J, D0, D1, dt, False)
                    if inv:
                        K = _heun_step(K, D0, D1, dt, True)
                else:
                    if jac:
                        J = _euler_step(J, D0, dt, False)
                    if inv:
                        K = _euler_step(K, D0, dt, True)
                D0 = D1
            X = Xn
            if k + 1 in store:
                i = store[k + 1]
                out_X[:, i] = X
                if jac:
                    out_J[:, i] = J
                if inv:
                    out_K[:, i] = K
    bad = ~np.isfinite(out_X).reshape(B, -1).all(axis=1)
    for arr in (out_J, out_K):
        if arr is not None:
            bad |= ~np.isfinite(arr).reshape(B, -1).all(axis=1)
    valid &= ~bad
    for arr in (out_X, out_J, out_K):
        if arr is not None:
            arr[~valid] = np.nan
    return dict(times=steps * dt, X=out_X, J=out_J, K=out_K, valid=valid)


def iter_flow_batches(drift: DriftField, lattice: BrownianLattice, initial_points, sigma, t_final, out_stride=1,
                      batch_size=256, paths=None, jacobians=False, inverse=False,
                      scheme="heun") -> Iterator[FlowEnsemble]:
    """Simulate in batches of paths; yields one :class:`FlowEnsemble` per batch.

    Memory stays bounded by ``batch_size`` when a reduction over paths is
    all that is needed.
    """
    n = _n_steps(lattice, t_final)
    points = _as_points(initial_points, lattice.d)
    paths = np.arange(lattice.n_paths) if paths is None else np.asarray(paths)
    meta = dict(drift=drift.name, sigma=float(sigma), dt=lattice.dt, seed=int(lattice.seed), n_steps=n,
                out_stride=int(out_stride), scheme=scheme)
    for s in range(0, len(paths), batch_size):
        chunk = paths[s : s + batch_size]
        r = _integrate(drift, lattice, points, sigma, n, out_stride, chunk, jacobians, inverse, scheme)
        yield FlowEnsemble(points, r["times"], r["X"], chunk, r["valid"], r["J"], r["K"], metadata=dict(meta))


def _concat(batches):
    first = batches[0]
    cat = lambda name: None if getattr(first, name) is None else np.concatenate([getattr(b, name) for b in batches])
    return replace(
        first,
        positions=cat("positions"),
        path_indices=cat("path_indices"),
        valid=cat("valid"),
        jacobians=cat("jacobians"),
        inverse_jacobians=cat("inverse_jacobians"),
        girsanov_log_weights=cat("girsanov_log_weights"),
    )


def simulate_flow(drift: DriftField, lattice: BrownianLattice, initial_points, sigma, t_final, out_stride=1,
                  batch_size=256, paths=None, jacobians=False, inverse=False, scheme="heun") -> FlowEnsemble:
    """Euler-Maruyama flow of every initial point under every lattice path (or ``paths``)."""
    return _concat(list(iter_flow_batches(drift, lattice, initial_points, sigma, t_final, out_stride, batch_size,
                                          paths=paths, jacobians=jacobians, inverse=inverse, scheme=scheme)))


def _recompute(ensemble, drift, lattice, which, scheme):
    meta = ensemble.metadata
    if drift.name != meta["drift"]:
        raise ValueError("drift does not match the ensemble")
    if lattice.seed != meta["seed"] or not math.isclose(lattice.dt, meta["dt"]):
        raise ValueError("lattice does not match the ensemble")
    r = _integrate(drift, lattice, ensemble.initial_points, meta["sigma"], meta["n_steps"], meta["out_stride"],
                   ensemble.path_indices, jac=which == "J", inv=which == "K", scheme=scheme)
    same = np.array_equal(np.nan_to_num(r["X"]), np.nan_to_num(ensemble.positions))
    if not same:
        raise RuntimeError("regenerated positions differ from the stored ensemble")
    return r


def jacobian_flow(ensemble: FlowEnsemble, drift: DriftField, lattice: BrownianLattice, scheme="heun") -> FlowEnsemble:
    """Fill ``ensemble.jacobians`` by integrating ``J' = Du(X) J`` along each path.

    The fine path is regenerated from the counter-based lattice, so nothing
    beyond the coarse output needs to be stored.  ``scheme="heun"`` (default)
    is second order; ``scheme="euler"`` is the exact derivative of the
    Euler-Maruyama map with respect to the initial point.
    """
    r = _recompute(ensemble, drift, lattice, "J", scheme)
    ensemble.jacobians = r["J"]
    ensemble.metadata["jacobian_scheme"] = scheme
    return ensemble


def inverse_jacobian_flow(ensemble: FlowEnsemble, drift: DriftField, lattice: BrownianLattice,
                          scheme="heun") -> FlowEnsemble:
    """Fill ``ensemble.inverse_jacobians`` from ``K' = -K Du(X)``; no matrix inversion."""
    r = _recompute(ensemble, drift, lattice, "K", scheme)
    ensemble.inverse_jacobians = r["K"]
    return ensemble


def finite_difference_jacobian(drift: DriftField, lattice: BrownianLattice, a, sigma, t, h=None, paths=None):
    """Central differences of the flow over ``2d`` perturbed starts on shared noise.

    ``h`` defaults to ``sqrt(dt)``.  Returns ``(n_paths, n_points, d, d)``.
    """
    d = lattice.d
    a = _as_points(a, d)
    h = math.sqrt(lattice.dt) if h is None else float(h)
    if not h > 0:
        raise ValueError("h must be positive")
    E = np.eye(d) * h
    pts = np.concatenate([a[:, None, :] + E[None], a[:, None, :] - E[None]], axis=1).reshape(-1, d)
    n = _n_steps(lattice, t)
    ens = simulate_flow(drift, lattice, pts, sigma, t, out_stride=n, paths=paths)
    X = ens.positions[:, -1].reshape(ens.n_paths, a.shape[0], 2, d, d)  # [path, point, sign, j, comp]
    diff = (X[:, :, 0] - X[:, :, 1]) / (2 * h)  # [path, point, j, comp]
    return np.swapaxes(diff, -1, -2)


def girsanov_log_weight(drift: DriftField, path, times, sigma):
    """``log M_u`` along a drift-free path ``x = a + sigma B``, cumulative in time.

    ``path`` has shape ``(..., n+1, d)`` on ``times``; the stochastic integral
    uses the left point.  Returns ``(..., n+1)`` with value 0 at ``times[0]``.
    """
    x = np.asarray(path, dtype=float)
    times = np.asarray(times, dtype=float)
    nu = 0.5 * sigma * sigma
    dx = np.diff(x, axis=-2)
    dt = np.diff(times)
    u = np.stack([drift.eval(x[..., k, :], times[k]) for k in range(len(times) - 1)], axis=-2)
    incr = np.sum(u * dx, axis=-1) / (2 * nu) - np.sum(u * u, axis=-1) * dt / (4 * nu)
    out = np.zeros(x.shape[:-1])
    out[..., 1:] = np.cumsum(incr, axis=-1)
    return out


def girsanov_ensemble(drift: DriftField, lattice: BrownianLattice, initial_points, sigma, t_final, out_stride=1,
                      batch_size=256) -> FlowEnsemble:
    """Drift-free reference paths ``a + sigma B`` with ``log M_u`` attached.

    The weights are accumulated on the fine grid, so they match
    :func:`girsanov_log_weight` applied to the full fine path.
    """
    batches = []
    n = _n_steps(lattice, t_final)
    points = _as_points(initial_points, lattice.d)
    nu = 0.5 * sigma * sigma
    for s in range(0, lattice.n_paths, batch_size):
        chunk = np.arange(s, min(s + batch_size, lattice.n_paths))
        r = _integrate_reference(drift, lattice, points, sigma, n, out_stride, chunk, nu)
        batches.append(
            FlowEnsemble(points, r["times"], r["X"], chunk, r["valid"], girsanov_log_weights=r["W"],
                         metadata=dict(drift="zero", weight_drift=drift.name, sigma=float(sigma), dt=lattice.dt,
                                       seed=int(lattice.seed), n_steps=n, out_stride=int(out_stride)))
        )
    return _concat(batches)


def _integrate_reference(drift, lattice, points, sigma, n, stride, paths, nu):
    # positions of a + sigma B with the weight of ``drift`` evaluated along them
    B, A, d = len(paths), points.shape[0], lattice.d
    dB = lattice.batch_increments(paths, 0, n)
    steps = output_steps(n, stride)
    store = {int(s): i for i, s in enumerate(steps)}
    out_X = np.empty((B, len(steps), A, d))
    out_W = np.zeros((B, len(steps), A))
    X = np.broadcast_to(points, (B, A, d)).copy()
    out_X[:, 0] = X
    logw = np.zeros((B, A))
    dt = lattice.dt
    for k in range(n):
        u = drift.eval(X, k * dt)
        noise = sigma * dB[:, k, None, :]
        logw += (np.sum(u * noise, axis=-1) - 0.5 * dt * np.sum(u * u, axis=-1)) / (2.0 * nu)
        X = X + noise
        if k + 1 in store:
            out_X[:, store[k + 1]] = X
            out_W[:, store[k + 1]] = logw
    valid = np.isfinite(out_W).reshape(B, -1).all(axis=1)
    return dict(times=steps * dt, X=out_X, W=out_W, valid=valid)


# ----------------------------------------------------------------------------
# Dyson series


@dataclass
class DysonResult:
    """Partial sums on the fine grid of one path.

    ``forward[m]`` and ``inverse[m]`` are the partial sums with ``m`` terms,
    shape ``(n_terms + 1, n_times, d, d)``; ``term_norms[m]`` is the
    Frobenius norm of term ``m`` at the final time.
    """

    times: np.ndarray
    forward: np.ndarray
    inverse: np.ndarray
    term_norms: np.ndarray
    inverse_term_norms: np.ndarray


def fine_path(drift: DriftField, lattice: BrownianLattice, a, sigma, t_final, path=0):
    """Positions of one path on every lattice step, shape ``(n+1, d)``."""
    ens = next(iter_flow_batches(drift, lattice, a, sigma, t_final, 1, paths=[path]))
    return ens.times, ens.positions[0, :, 0]


def _grad_along(drift, X, times):
    return np.stack([drift.grad(X[k], times[k]) for k in range(len(times))])


def dyson_series(drift: DriftField, times, positions, n_terms) -> DysonResult:
    """Iterated integrals ``S_{m+1}(t) = int_0^t Du(X(s), s) S_m(s) ds`` by cumulative trapezoid.

    The inverse series uses ``T_{m+1}(t) = -int_0^t T_m(s) Du(X(s), s) ds``,
    which carries the ``(-1)^n`` sign and the reversed time ordering.
    """
    if n_terms < 0:
        raise ValueError("n_terms must be nonnegative")
    if drift.grad is None:
        raise MissingGradientError(f"drift {drift.name!r} has no analytic gradient")
    times = np.asarray(times, dtype=float)
    X = np.asarray(positions, dtype=float)
    n, d = X.shape
    if n_terms > max(1, n // 4):
        import warnings

        warnings.warn("more Dyson terms than the stored resolution supports", RuntimeWarning, stacklevel=2)
    D = _grad_along(drift, X, times)
    eye = np.broadcast_to(np.eye(d), (n, d, d))
    S, T = eye.copy(), eye.copy()
    fwd, inv = [eye.copy()], [eye.copy()]
    fn, inn = [float(np.linalg.norm(np.eye(d)))], [float(np.linalg.norm(np.eye(d)))]
    for _ in range(n_terms):
        S = cumulative_trapezoid(D @ S, times, axis=0, initial=0.0)
        T = -cumulative_trapezoid(T @ D, times, axis=0, initial=0.0)
        fwd.append(fwd[-1] + S)
        inv.append(inv[-1] + T)
        fn.append(float(np.linalg.norm(S[-1])))
        inn.append(float(np.linalg.norm(T[-1])))
    return DysonResult(times, np.stack(fwd), np.stack(inv), np.asarray(fn), np.asarray(inn))


def trapezoid_jacobian(drift: DriftField, times, positions):
    """Implicit-trapezoid solution of ``J' = Du J``: the limit of the trapezoid Dyson sums."""
    times = np.asarray(times, dtype=float)
    X = np.asarray(positions, dtype=float)
    D = _grad_along(drift, X, times)
    d = X.shape[-1]
    J = np.empty((len(times), d, d))
    J[0] = np.eye(d)
    I = np.eye(d)
    for k in range(len(times) - 1):
        h = times[k + 1] - times[k]
        J[k + 1] = np.linalg.solve(I - 0.5 * h * D[k + 1], (I + 0.5 * h * D[k]) @ J[k])
    return J


# ----------------------------------------------------------------------------
# binary dump


_HEADER = "roughflow-trajectories v1; little-endian float64; row = [path, time, a_index, X_1..X_d]; d={d}; rows={rows}\n"


def dump_trajectories(ensemble: FlowEnsemble, filename):
    """Write positions as rows ``[path, time, a_index, X...]`` after one text header line."""
    P, T, A, d = ensemble.positions.shape
    p, t, a = np.meshgrid(ensemble.path_indices, ensemble.times, np.arange(A), indexing="ij")
    rows = np.concatenate(
        [p.reshape(-1, 1), t.reshape(-1, 1), a.reshape(-1, 1), ensemble.positions.reshape(-1, d)], axis=1
    ).astype("<f8")
    with open(filename, "wb") as fh:
        fh.write(_HEADER.format(d=d, rows=rows.shape[0]).encode("ascii"))
        fh.write(rows.tobytes())
    return rows.shape[0]


def load_trajectories(filename):
    """Inverse of :func:`dump_trajectories`; returns ``(rows, d)``."""
    with open(filename, "rb") as fh:
        header = fh.readline().decode("ascii")
        if not header.startswith("roughflow-trajectories v1"):
            raise ValueError("not a trajectory dump")
        fields = dict(part.strip().split("=") for part in header.split(";") if "=" in part and "row =" not in part)
        d, n = int(fields["d"]), int(fields["rows"])
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape(n, 3 + d), d
