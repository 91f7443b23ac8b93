"""Monte Carlo estimators for moments, tails and moduli of stochastic flows.

Every scalar estimate comes with a batch-means standard error (at least 30
batches) and is reported as an :class:`EstimateReport` whose confidence
interval is plus or minus three standard errors.  Path time integrals use
left-point Riemann sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import norm

from .fields import DriftField
from .flow import FlowEnsemble, _as_points, _n_steps, output_steps
from .rng import BrownianLattice

MIN_BATCHES = 30


class MissingJacobianError(ValueError):
    pass


class LatticeTooCoarseError(ValueError):
    pass


class ExponentPreconditionError(ValueError):
    pass


@dataclass
class EstimateReport:
    name: str
    estimate: float
    stderr: float
    n_samples: int
    params: dict = field(default_factory=dict)
    regime: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    @property
    def ci(self):
        return (self.estimate - 3 * self.stderr, self.estimate + 3 * self.stderr)

    def row(self):
        return {
            "estimand": self.name,
            "params": ";".join(f"{k}={v}" for k, v in sorted(self.params.items())),
            "estimate": self.estimate,
            "stderr": self.stderr,
            "n": self.n_samples,
        }


def batch_means(values, n_batches=32):
    """Mean and batch-means standard error of ``values`` along axis 0.

    With fewer samples than batches every sample is its own batch.
    """
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    if n == 0:
        raise ValueError("no samples")
    if n == 1:
        return v[0] * 1.0, np.zeros_like(v[0]) * 1.0
    B = min(max(n_batches, MIN_BATCHES), n)
    edges = np.linspace(0, n, B + 1).astype(int)
    means = np.stack([v[edges[i] : edges[i + 1]].mean(axis=0) for i in range(B)])
    sizes = np.diff(edges).astype(float)
    shape = (B,) + (1,) * (v.ndim - 1)
    w = (sizes / n).reshape(shape)
    mean = np.sum(w * means, axis=0)
    # weighted batch-means variance of the overall mean
    var = np.sum(w * w * (means - mean) ** 2, axis=0) * B / (B - 1)
    return mean, np.sqrt(var)


def entrywise_norm(M):
    """Sum of absolute entries over the last two axes."""
    return np.sum(np.abs(M), axis=(-2, -1))


def _regime(ensemble):
    return {k: ensemble.metadata[k] for k in ("drift", "sigma", "dt", "seed") if k in ensemble.metadata}


# ----------------------------------------------------------------------------
# moments and tails


def moment_estimate(ensemble: FlowEnsemble, p, t, regime=None) -> EstimateReport:
    """``sup_a E[|D_aX|^p + |(D_aX)^{-1}|^p]`` with the entrywise-sum norm.

    The sup is the max over the initial lattice; ``params["per_point"]`` holds
    each point's estimate and ``params["argmax"]`` the maximizing index.
    """
    if ensemble.jacobians is None or ensemble.inverse_jacobians is None:
        raise MissingJacobianError("moment_estimate needs jacobians and inverse_jacobians")
    ens = ensemble.finite()
    i = ens.time_index(t)
    fwd = entrywise_norm(ens.jacobians[:, i]) ** p
    inv = entrywise_norm(ens.inverse_jacobians[:, i]) ** p
    m, se = batch_means(fwd + inv)
    mf, sef = batch_means(fwd)
    mi, sei = batch_means(inv)
    j = int(np.argmax(m))
    return EstimateReport(
        f"moment_p{p}",
        float(m[j]),
        float(se[j]),
        ens.n_paths,
        params=dict(p=p, t=float(t), argmax=j, per_point=m.tolist(), lattice_size=int(m.size),
                    forward=float(mf[j]), forward_se=float(sef[j]), inverse=float(mi[j]), inverse_se=float(sei[j])),
        regime=dict(_regime(ensemble), **(regime or {})),
        flags=dict(excluded_paths=ensemble.n_flagged),
    )


def wilson_interval(k, n, z=1.96):
    k = np.asarray(k, dtype=float)
    p = k / n
    den = 1 + z * z / n
    center = (p + z * z / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return np.clip(center - half, 0, 1), np.clip(center + half, 0, 1)


@dataclass
class TailCurve:
    lambdas: np.ndarray
    prob: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    censored: np.ndarray
    n_samples: int
    fitted_slope: float | None
    reference_slope: float | None

    def layer_cake_mean(self):
        """``int_0^inf P(|J| >= l) dl`` by trapezoid over the grid (grid must start at 0)."""
        return float(np.trapezoid(self.prob, self.lambdas))


def tail_probability(ensemble: FlowEnsemble, lambdas, t, point=0, delta1=None, z=1.96) -> TailCurve:
    """Empirical ``P(|D_aX(a, t)| >= lambda)`` with Wilson intervals.

    Levels with no exceedances are marked censored.  The diagnostic slope of
    ``log(-log P)`` against ``log log lambda`` uses levels with ``lambda > e``
    and ``0 < P < 1``; it is compared with ``1/(1 - delta1)`` when given.
    """
    if ensemble.jacobians is None:
        raise MissingJacobianError("tail_probability needs jacobians")
    ens = ensemble.finite()
    i = ens.time_index(t)
    x = entrywise_norm(ens.jacobians[:, i, point])
    lam = np.asarray(lambdas, dtype=float)
    k = np.array([np.count_nonzero(x >= l) for l in lam])
    n = x.size
    P = k / n
    lo, hi = wilson_interval(k, n, z)
    lo, hi = np.minimum(lo, P), np.maximum(hi, P)  # guard roundoff at P in {0, 1}
    use = (lam > math.e) & (k > 0) & (k < n)
    slope = None
    if np.count_nonzero(use) >= 3:
        slope = float(np.polyfit(np.log(np.log(lam[use])), np.log(-np.log(P[use])), 1)[0])
    ref = None if delta1 is None else 1.0 / (1.0 - delta1)
    return TailCurve(lam, P, lo, hi, k == 0, n, slope, ref)


# ----------------------------------------------------------------------------
# moduli of continuity


def lattice_spacing(points):
    tree = cKDTree(points)
    dist, _ = tree.query(points, k=2)
    return float(dist[:, 1].min())


def modulus_of_continuity(ensemble: FlowEnsemble, delta, ell, t) -> EstimateReport:
    """``E sup |X(a, t) - X(b, t)|`` over lattice pairs with ``|a - b| <= delta``, ``|a|, |b| <= ell``."""
    pts = ensemble.initial_points
    inside = np.linalg.norm(pts, axis=1) <= ell + 1e-12
    sub = pts[inside]
    if sub.shape[0] < 2:
        raise LatticeTooCoarseError("fewer than two lattice points in the ball")
    h = lattice_spacing(sub)
    if h > delta / 4 + 1e-12:
        raise LatticeTooCoarseError(f"lattice spacing {h} exceeds delta/4 = {delta / 4}")
    pairs = np.array(sorted(cKDTree(sub).query_pairs(delta * (1 + 1e-9))))
    ens = ensemble.finite()
    i = ens.time_index(t)
    X = ens.positions[:, i][:, inside]
    diff = np.linalg.norm(X[:, pairs[:, 0]] - X[:, pairs[:, 1]], axis=-1)
    sup = diff.max(axis=1)
    m, se = batch_means(sup)
    return EstimateReport(
        "modulus", float(m), float(se), ens.n_paths,
        params=dict(delta=float(delta), ell=float(ell), t=float(t), spacing=h, pairs=int(len(pairs))),
        regime=_regime(ensemble),
    )


def modulus_scaling(ensemble: FlowEnsemble, deltas, ell, t):
    """Reports over a geometric ``delta`` grid and the fitted log-log slope."""
    reps = [modulus_of_continuity(ensemble, d, ell, t) for d in deltas]
    slope = float(np.polyfit(np.log(deltas), np.log([r.estimate for r in reps]), 1)[0])
    return reps, slope


@dataclass
class GRRResult:
    lhs: np.ndarray  # per path
    rhs: np.ndarray
    ratio: np.ndarray
    params: dict


def _grid_weights(x):
    # trapezoid cell weights of a 1-D node set
    w = np.zeros_like(x)
    dx = np.diff(x)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


class _GRRGeometry:
    """Pair weights and neighbourhood mask of a tensor (time x space) grid, shared by all paths."""

    def __init__(self, points, times, delta, beta, p, d):
        a = np.asarray(points, dtype=float).reshape(-1)
        t = np.asarray(times, dtype=float)
        T, A = np.meshgrid(t, a, indexing="ij")
        node_t, node_a = T.ravel(), A.ravel()
        w = np.outer(_grid_weights(t), _grid_weights(a)).ravel()
        dist_a = np.abs(node_a[:, None] - node_a[None, :])
        dist_t = np.abs(node_t[:, None] - node_t[None, :])
        self.near = (dist_a <= delta * (1 + 1e-9)) & (dist_t <= delta * (1 + 1e-9))
        r2 = dist_a**2 + dist_t**2
        np.fill_diagonal(r2, np.inf)
        self.kernel = w[:, None] * w[None, :] * r2 ** (-(beta * p + d + 1) / 2)
        self.prefactor = delta ** (beta - (d + 1) / p)
        self.p = p

    def sides(self, X):
        V = X.reshape(-1, X.shape[-1])
        dv2 = np.sum((V[:, None, :] - V[None, :, :]) ** 2, axis=-1)
        lhs = float(np.sqrt(dv2[self.near].max()))
        total = float(np.sum(self.kernel * dv2 ** (self.p / 2)))
        return lhs, self.prefactor * total ** (1.0 / self.p)


def grr_sides(X, points, times, delta, beta, p):
    """Both sides of the Garsia-Rodemich-Rumsey bound for one space-time field.

    ``X`` has shape ``(n_times, n_points, d)`` on a tensor grid of ``points``
    (``d = 1``, sorted) and ``times``.  The lhs is the joint modulus
    ``sup |X(a, t) - X(b, s)|`` over ``|a - b| <= delta``, ``|t - s| <= delta``;
    the rhs is ``delta^{beta - (d+1)/p}`` times the ``p``-th root of the
    trapezoid-weighted double grid sum with the diagonal excluded.
    """
    X = np.asarray(X, dtype=float)
    return _GRRGeometry(points, times, delta, beta, p, 1).sides(X)


def grr_check(ensemble: FlowEnsemble, beta, p, ell, T, delta) -> GRRResult:
    """Per-path GRR sides over the initial lattice inside ``|a| <= ell`` and output times in ``[0, T]``."""
    d = ensemble.d
    if not 0 < beta < 1:
        raise ExponentPreconditionError("beta must lie in (0, 1)")
    if not p > (d + 1) / beta:
        raise ExponentPreconditionError(f"need p > (d+1)/beta = {(d + 1) / beta}")
    if d != 1:
        raise ExponentPreconditionError("grid GRR functional is implemented for d = 1")
    pts = ensemble.initial_points[:, 0]
    inside = np.abs(pts) <= ell + 1e-12
    order = np.argsort(pts[inside])
    tmask = ensemble.times <= T + 1e-12
    geom = _GRRGeometry(pts[inside][order], ensemble.times[tmask], delta, beta, p, d)
    ens = ensemble.finite()
    sides = np.array([geom.sides(ens.positions[P][tmask][:, inside][:, order]) for P in range(ens.n_paths)])
    lhs, rhs = sides[:, 0], sides[:, 1]
    return GRRResult(lhs, rhs, lhs / rhs, dict(beta=beta, p=p, ell=ell, T=T, delta=delta,
                                              n_points=int(inside.sum()), n_times=int(tmask.sum())))


def fit_grr_constant(calibration: GRRResult, margin=2.0):
    """``margin`` times the largest observed ratio on a calibration ensemble."""
    return float(margin * calibration.ratio.max())


# ----------------------------------------------------------------------------
# Khasminskii functional


@dataclass
class KhasminskiiResult:
    exponential: EstimateReport
    first_moment: EstimateReport
    diverged: bool
    path_integrals: np.ndarray


def path_energy(drift: DriftField, lattice: BrownianLattice, a, sigma, t, paths=None, batch_size=2048):
    """Left Riemann sums of ``int_0^t |u|^2(a + sigma B(s), s) ds``, shape ``(n_paths, n_points)``."""
    n = _n_steps(lattice, t)
    pts = _as_points(a, lattice.d)
    paths = np.arange(lattice.n_paths) if paths is None else np.asarray(paths)
    out = []
    dt = lattice.dt
    for s in range(0, len(paths), batch_size):
        chunk = paths[s : s + batch_size]
        dB = lattice.batch_increments(chunk, 0, n)
        X = np.broadcast_to(pts, (len(chunk),) + pts.shape).copy()
        F = np.zeros(X.shape[:-1])
        for k in range(n):
            u = drift.eval(X, k * dt)
            F += np.sum(u * u, axis=-1) * dt
            X += sigma * dB[:, k, None, :]
        out.append(F)
    return np.concatenate(out)


def khasminskii_functional(drift: DriftField, lattice: BrownianLattice, a, lam, t, sigma, point=0) -> KhasminskiiResult:
    """``E exp(lam int_0^t |u|^2(a + sigma B) ds)`` and the first moment ``E int_0^t |u|^2``."""
    F = path_energy(drift, lattice, a, sigma, t)[:, point]
    with np.errstate(over="ignore"):
        e = np.exp(lam * F)
    m1, se1 = batch_means(F)
    with np.errstate(invalid="ignore", over="ignore"):
        me, see = batch_means(e)
    diverged = not np.isfinite(me) or me > 1e300
    params = dict(lam=float(lam), t=float(t), point=int(point))
    regime = dict(drift=drift.name, sigma=float(sigma), dt=lattice.dt, seed=int(lattice.seed))
    exp_rep = EstimateReport("khasminskii_exp", float("nan") if diverged else float(me),
                             float("nan") if diverged else float(see), F.size, params, regime,
                             flags=dict(diverged=diverged))
    first = EstimateReport("khasminskii_first_moment", float(m1), float(se1), F.size, params, regime)
    return KhasminskiiResult(exp_rep, first, diverged, F)


def bump_first_moment_exact(amplitude, width, a, sigma, t):
    """``E int_0^t |u|^2(a + sigma B(s)) ds`` for ``u = A exp(-|x|^2/w^2)`` in any dimension (quadrature in time).

    Uses ``E exp(-2|Y|^2/w^2) = (1 + 4 v/w^2)^{-d/2} exp(-2|a|^2/(w^2 + 4 v))``
    for ``Y ~ N(a, v I)``.
    """
    from scipy.integrate import quad

    a = np.atleast_1d(np.asarray(a, dtype=float))
    d = a.size
    r2 = float(a @ a)
    w2 = width * width

    def g(s):
        v = sigma * sigma * s
        return (1 + 4 * v / w2) ** (-d / 2) * math.exp(-2 * r2 / (w2 + 4 * v))

    return amplitude**2 * quad(g, 0, t, epsabs=1e-13, epsrel=1e-12)[0]


def normal_quantile(level):
    return float(norm.ppf(level))
