"""Configuration-driven scenarios with persisted, reproducible results.

A run reads an :class:`ExperimentConfig`, executes one named scenario and
writes ``results.csv`` (one row per estimand, with provenance columns),
``summary.json`` (config echo, headline numbers, check verdicts) and
optionally ``plots.svg``.  The check functions at the top of this module are
shared with the acceptance suite.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import itertools
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import blocks as B
from .estimators import (
    EstimateReport,
    GRRResult,
    batch_means,
    fit_grr_constant,
    grr_check,
    khasminskii_functional,
    modulus_scaling,
    moment_estimate,
    path_energy,
    tail_probability,
)
from .exponents import DomainError, Exponents, mixed_norm
from .fields import DriftField, catalog_field, hamiltonian, HAMILTONIANS
from .flow import (
    dyson_series,
    fine_path,
    finite_difference_jacobian,
    girsanov_ensemble,
    simulate_flow,
    trapezoid_jacobian,
)
from .forms import (
    TensorGrid,
    batched_process,
    circulation_process,
    martingale_statistic,
    rejection_rate,
    stream_vector_field,
    symplectic_residual,
    vorticity_process,
)
from .heat_kernel import KernelSpec, verify_lr_norm_bound
from .rng import BrownianLattice, stream

SCHEMA_VERSION = 1
U64_MAX = 2**64 - 1
I64_MAX = 2**63 - 1


class ConfigError(ValueError):
    """Invalid configuration; the message names the field and, when known, the line."""


# ----------------------------------------------------------------------------
# shared checks


def derived_seed(seed, tag):
    """Independent 63-bit seed for a named sub-experiment."""
    h = int.from_bytes(hashlib.sha256(str(tag).encode()).digest()[:8], "little")
    return int(stream(seed, h).integers(0, I64_MAX))


def check_jacobian_fd(drift, sigma, dt, t, n_paths, points, seed):
    """Per-path relative Frobenius error of variational Jacobians against common-noise differences."""
    lat = BrownianLattice(dt, int(round(t / dt)), drift.d, seed, n_paths)
    fd = finite_difference_jacobian(drift, lat, points, sigma, t)
    out = {}
    for scheme in ("euler", "heun"):
        J = simulate_flow(drift, lat, points, sigma, t, out_stride=lat.n_steps, jacobians=True,
                          scheme=scheme).jacobians[:, -1]
        rel = np.linalg.norm(fd - J, axis=(-2, -1)) / np.linalg.norm(J, axis=(-2, -1))
        out[scheme] = float(rel.max())
    return dict(max_rel_euler=out["euler"], max_rel_heun=out["heun"], passed=out["euler"] < 1e-3)


def check_liouville(drift, sigma, dt, t, n_paths, points, seed, out_stride=10):
    lat = BrownianLattice(dt, int(round(t / dt)), drift.d, seed, n_paths)
    ens = simulate_flow(drift, lat, points, sigma, t, out_stride=out_stride, jacobians=True)
    dev = float(np.nanmax(np.abs(np.linalg.det(ens.jacobians) - 1.0)))
    return dict(max_det_deviation=dev, passed=dev <= 1e-3)


def check_girsanov(drift, sigma, dt, t, n_paths, point, seed):
    lat = BrownianLattice(dt, int(round(t / dt)), drift.d, seed, n_paths)
    ens = girsanov_ensemble(drift, lat, [point], sigma, t, out_stride=lat.n_steps, batch_size=2500)
    M = np.exp(ens.girsanov_log_weights[:, -1, 0])
    mean, se = float(M.mean()), float(M.std(ddof=1) / math.sqrt(M.size))
    return dict(mean=mean, stderr=se, z=(mean - 1) / se if se > 0 else 0.0, passed=abs(mean - 1) <= 3 * se)


def check_girsanov_constant(c, sigma, dt, t, n_paths, point, seed):
    """Largest deviation of the Girsanov log weight from its closed form for a constant drift."""
    from .fields import constant

    c = np.atleast_1d(np.asarray(c, float))
    lat = BrownianLattice(dt, int(round(t / dt)), c.size, seed, n_paths)
    ens = girsanov_ensemble(constant(c), lat, [point], sigma, t)
    nu = sigma * sigma / 2
    x = ens.positions[:, :, 0]
    closed = (x - np.asarray(point, float)) @ c / (2 * nu) - (c @ c) * ens.times / (4 * nu)
    dev = float(np.max(np.abs(ens.girsanov_log_weights[:, :, 0] - closed)))
    return dict(max_deviation=dev, passed=dev <= 1e-12)


def check_dyson(drift, sigma, dt, t, point, seed, n_terms=8):
    lat = BrownianLattice(dt, int(round(t / dt)), drift.d, seed, 1)
    times, X = fine_path(drift, lat, [point], sigma, t)
    r = dyson_series(drift, times, X, n_terms)
    ode = simulate_flow(drift, lat, [point], sigma, t, out_stride=lat.n_steps, jacobians=True).jacobians[0, -1, 0]
    floor = float(np.linalg.norm(trapezoid_jacobian(drift, times, X)[-1] - ode))
    err = float(np.linalg.norm(r.forward[n_terms, -1] - ode))
    tail = r.term_norms[4:]
    monotone = bool(np.all(np.diff(tail) < 0) or np.all(tail[1:] == 0))
    return dict(error=err, floor=floor, bound=1e-6 + floor, monotone=monotone,
                term_norms=r.term_norms.tolist(), passed=err <= 1e-6 + floor and monotone)


def gradient_drift(H) -> DriftField:
    """Non-Hamiltonian control ``u = grad H`` (no symplectic rotation)."""
    return DriftField("gradient", 2 * H.n, lambda x, t=0.0: H.grad(x), lambda x, t=0.0: H.hess(x),
                      params={"H": H.name})


def check_symplectic(H, sigma, dts, t, n_paths, point, seed):
    """Residual at a dt-halving pair for the Euler tangent, Heun diagnostics and the gradient control."""
    u = hamiltonian(H)
    ctrl = gradient_drift(H)
    res, heun, control = [], [], []
    for dt in dts:
        lat = BrownianLattice(dt, int(round(t / dt)), 2 * H.n, seed, n_paths)
        ens = simulate_flow(u, lat, [point], sigma, t, out_stride=lat.n_steps, jacobians=True, scheme="euler")
        res.append(float(symplectic_residual(ens, t).max()))
        ens_h = simulate_flow(u, lat, [point], sigma, t, out_stride=lat.n_steps, jacobians=True)
        heun.append(float(symplectic_residual(ens_h, t).max()))
        ens_c = simulate_flow(ctrl, lat, [point], sigma, t, out_stride=lat.n_steps, jacobians=True, scheme="euler")
        control.append(float(symplectic_residual(ens_c, t).min()))
    ratio = res[0] / res[1]
    ctrl_ratio = min(c / r for c, r in zip(control, res))
    return dict(residuals=res, ratio=ratio, heun_residuals=heun, control_residuals=control,
                control_ratio=ctrl_ratio, passed=1.5 <= ratio <= 2.5 and ctrl_ratio >= 10)


def check_khasminskii_reference(drift, sigma, dt, t, n_paths, point, seed, lam=0.5, factor=10):
    """First moment against a reference with ``factor`` x paths and ``dt / factor``."""
    base = khasminskii_functional(drift, BrownianLattice(dt, int(round(t / dt)), drift.d, seed, n_paths),
                                  [point], lam, t, sigma)
    rdt = dt / factor
    ref = khasminskii_functional(drift, BrownianLattice(rdt, int(round(t / rdt)), drift.d,
                                                        derived_seed(seed, "reference"), factor * n_paths),
                                 [point], lam, t, sigma)
    a, b = base.first_moment, ref.first_moment
    comb = math.hypot(a.stderr, b.stderr)
    jensen = math.exp(lam * a.estimate) <= base.exponential.estimate
    return dict(first_moment=a.estimate, stderr=a.stderr, reference=b.estimate, reference_stderr=b.stderr,
                gap=abs(a.estimate - b.estimate), bound=3 * comb, jensen=jensen,
                passed=abs(a.estimate - b.estimate) <= 3 * comb and jensen)


def grr_ensemble(drift, sigma, n_points, n_intervals, n_paths, seed, ell=1.0, T=1.0, substeps=4):
    pts = np.linspace(-ell, ell, n_points)[:, None]
    dt = T / (n_intervals * substeps)
    lat = BrownianLattice(dt, n_intervals * substeps, 1, seed, n_paths)
    return simulate_flow(drift, lat, pts, sigma, T, out_stride=substeps)


def check_grr(drifts, sigma, resolutions, n_paths, seed, beta=0.5, p=6.0, ell=1.0, T=1.0, delta=0.2):
    """Fit ``C`` on an independent u = 0 ensemble per resolution, then test every path of every drift."""
    from .fields import zero

    out = []
    for n_points, n_int in resolutions:
        cal = grr_check(grr_ensemble(zero(1), sigma, n_points, n_int, n_paths, derived_seed(seed, f"cal{n_points}"),
                                     ell, T), beta, p, ell, T, delta)
        C = fit_grr_constant(cal)
        for name, drift in drifts:
            g = grr_check(grr_ensemble(drift, sigma, n_points, n_int, n_paths,
                                       derived_seed(seed, f"{name}{n_points}"), ell, T), beta, p, ell, T, delta)
            out.append(dict(resolution=[n_points, n_int], drift=name, C=C, max_ratio=float(g.ratio.max()),
                            holds=bool(np.all(g.lhs <= C * g.rhs)), lhs_mean=float(g.lhs.mean()),
                            rhs_mean=float(g.rhs.mean())))
    return dict(cases=out, passed=all(c["holds"] for c in out))


# ----------------------------------------------------------------------------
# configuration


@dataclass
class DriftSpec:
    name: str = "zero"
    params: dict = field(default_factory=dict)


@dataclass
class ExponentSpec:
    d: int = 1
    r: float = math.inf
    q: float = math.inf
    sigma: float = 1.0


@dataclass
class LatticeSpec:
    lo: list = field(default_factory=lambda: [-1.0])
    hi: list = field(default_factory=lambda: [1.0])
    n: list = field(default_factory=lambda: [5])


@dataclass
class Numerics:
    dt: float = 0.01
    t_final: float = 1.0
    n_paths: int = 1000
    seed: int = 0
    mc_samples: int = 256_000
    out_stride: int = 10
    batch_size: int = 256
    workers: int = 1
    lattice: LatticeSpec = field(default_factory=LatticeSpec)


@dataclass
class Outputs:
    directory: str = ""
    formats: list = field(default_factory=lambda: ["csv", "json"])
    plot: bool = True


@dataclass
class ExperimentConfig:
    scenario: str
    schema_version: int = SCHEMA_VERSION
    drift: DriftSpec = field(default_factory=DriftSpec)
    exponents: ExponentSpec = field(default_factory=ExponentSpec)
    numerics: Numerics = field(default_factory=Numerics)
    outputs: Outputs = field(default_factory=Outputs)
    params: dict = field(default_factory=dict)

    def to_dict(self):
        d = dataclasses.asdict(self)
        seed = d["numerics"]["seed"]
        if seed > I64_MAX:  # TOML integers are signed 64-bit
            d["numerics"]["seed"] = str(seed)
        return d

    def replace_numerics(self, **kw):
        return dataclasses.replace(self, numerics=dataclasses.replace(self.numerics, **kw))


_SECTIONS = {"drift": DriftSpec, "exponents": ExponentSpec, "numerics": Numerics, "outputs": Outputs}


def _line_of(text, path):
    """Best-effort line number of the dotted key ``path`` in TOML ``text``."""
    if text is None:
        return None
    parts = path.split(".")
    key = parts[-1]
    table = ".".join(parts[:-1])
    current = ""
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and not s.startswith("[["):
            current = s.strip("[]").strip()
            continue
        if current == table and (s.startswith(key + " ") or s.startswith(key + "=")):
            return i
    return None


def _fail(text, path, msg):
    line = _line_of(text, path)
    where = f" (line {line})" if line else ""
    raise ConfigError(f"{path}{where}: {msg}")


def _coerce(text, path, value, kind):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            _fail(text, path, f"expected a number, got {value!r}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            _fail(text, path, f"expected an integer, got {value!r}")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            _fail(text, path, f"expected true/false, got {value!r}")
        return value
    if kind is str:
        if not isinstance(value, str):
            _fail(text, path, f"expected a string, got {value!r}")
        return value
    if kind is list:
        if not isinstance(value, list):
            _fail(text, path, f"expected an array, got {value!r}")
        return value
    if kind is dict:
        if not isinstance(value, dict):
            _fail(text, path, f"expected a table, got {value!r}")
        return value
    raise TypeError(kind)


def _build(cls, data, text, prefix):
    if not isinstance(data, dict):
        _fail(text, prefix, "expected a table")
    hints = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else key
        if key not in hints:
            _fail(text, path, f"unknown key; allowed: {sorted(hints)}")
        f = hints[key]
        kind = {"float": float, "int": int, "bool": bool, "str": str, "list": list, "dict": dict}.get(str(f.type))
        if key == "lattice":
            kwargs[key] = _build(LatticeSpec, value, text, path)
        elif key == "seed":
            kwargs[key] = _parse_seed(text, path, value)
        elif kind is None:
            raise TypeError(f"unsupported field type {f.type}")
        else:
            kwargs[key] = _coerce(text, path, value, kind)
    return cls(**kwargs)


def _parse_seed(text, path, value):
    if isinstance(value, str) and value.isdigit():
        value = int(value)
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value <= U64_MAX:
        _fail(text, path, f"seed must be an unsigned 64-bit integer, got {value!r}")
    return value


def config_from_dict(data, text=None) -> ExperimentConfig:
    if "scenario" not in data:
        raise ConfigError("scenario: missing required key")
    version = data.get("schema_version", None)
    if version is None:
        raise ConfigError("schema_version: missing required key")
    if version != SCHEMA_VERSION:
        _fail(text, "schema_version", f"unsupported schema version {version}; this build reads {SCHEMA_VERSION}")
    kwargs = {"scenario": _coerce(text, "scenario", data["scenario"], str), "schema_version": version}
    for key, value in data.items():
        if key in ("scenario", "schema_version"):
            continue
        if key in _SECTIONS:
            kwargs[key] = _build(_SECTIONS[key], value, text, key)
        elif key == "params":
            kwargs[key] = _coerce(text, key, value, dict)
        else:
            _fail(text, key, f"unknown top-level key; allowed: {['scenario', 'schema_version', *_SECTIONS, 'params']}")
    cfg = ExperimentConfig(**kwargs)
    validate(cfg, text)
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    import sys

    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"TOML syntax: {e}") from None
    return config_from_dict(data, text)


def emit_config(cfg: ExperimentConfig) -> str:
    import tomli_w

    return tomli_w.dumps(cfg.to_dict())


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def validate(cfg: ExperimentConfig, text=None):
    if cfg.scenario not in SCENARIOS:
        _fail(text, "scenario", f"unknown scenario {cfg.scenario!r}; choose from {list(SCENARIOS)}")
    n = cfg.numerics
    for key in ("dt", "t_final"):
        if not getattr(n, key) > 0:
            _fail(text, f"numerics.{key}", "must be positive")
    for key in ("n_paths", "mc_samples", "out_stride", "batch_size", "workers"):
        if getattr(n, key) < 1:
            _fail(text, f"numerics.{key}", "must be at least 1")
    if not cfg.exponents.sigma > 0:
        _fail(text, "exponents.sigma", "must be positive")
    lat = n.lattice
    if not (len(lat.lo) == len(lat.hi) == len(lat.n)):
        _fail(text, "numerics.lattice.n", "lo, hi and n must have the same length")
    for fmt in cfg.outputs.formats:
        if fmt not in ("csv", "json"):
            _fail(text, "outputs.formats", f"unknown format {fmt!r}")
    try:
        drift = build_drift(cfg)
    except (KeyError, TypeError, ValueError) as e:
        _fail(text, "drift.name", f"cannot build drift: {e}")
    if drift.d != cfg.exponents.d:
        _fail(text, "exponents.d", f"dimension {cfg.exponents.d} does not match the {drift.d}-dimensional drift")
    if len(lat.lo) not in (0, drift.d):
        _fail(text, "numerics.lattice.lo", f"lattice has {len(lat.lo)} axes for a {drift.d}-dimensional drift")


def build_drift(cfg: ExperimentConfig) -> DriftField:
    return catalog_field(cfg.drift.name, **cfg.drift.params)


def lattice_points(cfg: ExperimentConfig):
    lat = cfg.numerics.lattice
    return TensorGrid.box(lat.lo, lat.hi, lat.n).points


# ----------------------------------------------------------------------------
# runner


def build_id():
    """``roughflow-<version>+<hash of the package sources>``; stable for identical code."""
    h = hashlib.sha1()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return f"roughflow-{__version__}+{h.hexdigest()[:12]}"


CSV_COLUMNS = ["scenario", "estimand", "params", "estimate", "stderr", "n", "seed", "dt", "n_paths", "build"]


class Run:
    """Mutable collector for one scenario execution."""

    def __init__(self, cfg: ExperimentConfig, workers: int):
        self.cfg = cfg
        self.workers = workers
        self.rows = []
        self.checks = {}
        self.headline = {}
        self.panels = []
        self.build = build_id()

    def add(self, estimand, estimate=None, stderr=0.0, n=0, /, **params):
        if isinstance(estimand, EstimateReport):
            r = estimand
            estimand, estimate, stderr, n = r.name, r.estimate, r.stderr, r.n_samples
            params = {**{k: v for k, v in r.params.items() if np.isscalar(v)}, **params}
        n_ = self.cfg.numerics
        self.rows.append(dict(
            scenario=self.cfg.scenario,
            estimand=estimand,
            params=";".join(f"{k}={_fmt(v)}" for k, v in sorted(params.items())),
            estimate=_fmt(estimate),
            stderr=_fmt(stderr),
            n=int(n),
            seed=n_.seed,
            dt=_fmt(n_.dt),
            n_paths=n_.n_paths,
            build=self.build,
        ))

    def check(self, name, passed, /, **details):
        self.checks[name] = bool(passed)
        details.pop("passed", None)
        if details:
            self.headline[name] = _jsonable(details)

    def panel(self, title, series, xlabel="", ylabel="", logx=False, logy=False, hline=None):
        self.panels.append(dict(title=title, series=series, xlabel=xlabel, ylabel=ylabel, logx=logx, logy=logy,
                                hline=hline))

    def map(self, fn, items):
        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as ex:
                return list(ex.map(fn, items))
        return [fn(x) for x in items]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + " ".join(_fmt(x) for x in np.ravel(v)) + "]"
    return str(v)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in (x.tolist() if isinstance(x, np.ndarray) else x)]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


@dataclass
class RunOutcome:
    status: int
    directory: Path
    checks: dict
    error: str | None = None


EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def run(cfg: ExperimentConfig, out_dir, workers=None) -> RunOutcome:
    """Execute ``cfg`` and write its artifacts into ``out_dir``.

    Exit status: 0 when every scenario check passes, 1 when a check fails,
    3 when the scenario raised (rows gathered so far are still written).
    """
    validate(cfg)
    workers = cfg.numerics.workers if workers is None else int(workers)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    r = Run(cfg, workers)
    t0 = time.perf_counter()
    error = None
    try:
        SCENARIOS[cfg.scenario].func(r)
    except Exception as e:  # numeric failure: keep partial results
        error = f"{type(e).__name__}: {e}"
    elapsed = time.perf_counter() - t0
    if error is not None:
        status = EXIT_NUMERIC
    else:
        status = EXIT_OK if r.checks and all(r.checks.values()) else EXIT_CHECK_FAILED
    if "csv" in cfg.outputs.formats:
        write_csv(out / "results.csv", r.rows)
    if "json" in cfg.outputs.formats:
        summary = dict(
            scenario=cfg.scenario,
            anchor=SCENARIOS[cfg.scenario].anchor,
            seed=str(cfg.numerics.seed),
            workers=workers,
            build=r.build,
            config=cfg.to_dict(),
            headline=r.headline,
            checks=r.checks,
            passed=status == EXIT_OK,
            exit_status=status,
            error=error,
            elapsed_seconds=round(elapsed, 3),
        )
        (out / "summary.json").write_text(json.dumps(_jsonable(summary), sort_keys=True, indent=2) + "\n",
                                          encoding="utf-8")
    if cfg.outputs.plot and r.panels:
        write_svg(out / "plots.svg", r.panels, cfg.scenario)
    return RunOutcome(status, out, dict(r.checks), error)


def write_csv(path, rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\r\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    Path(path).write_bytes(buf.getvalue().encode("utf-8"))


def write_svg(path, panels, title):
    """Static SVG with one axes per panel; the plotted data is embedded as JSON metadata."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n = len(panels)
    cols = min(n, 3)
    rows = math.ceil(n / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(4.2 * cols, 3.4 * rows), squeeze=False)
    for ax, p in zip(axes.ravel(), panels):
        for s in p["series"]:
            style = s.get("style", "o-")
            ax.plot(s["x"], s["y"], style, label=s.get("label"), ms=3, lw=1)
        if p.get("hline") is not None:
            for h in np.atleast_1d(p["hline"]):
                ax.axhline(h, color="grey", ls="--", lw=0.8)
        if p["logx"]:
            ax.set_xscale("log")
        if p["logy"]:
            ax.set_yscale("log")
        ax.set_title(p["title"], fontsize=9)
        ax.set_xlabel(p["xlabel"], fontsize=8)
        ax.set_ylabel(p["ylabel"], fontsize=8)
        if any(s.get("label") for s in p["series"]):
            ax.legend(fontsize=7)
    for ax in axes.ravel()[n:]:
        ax.axis("off")
    fig.suptitle(title)
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    svg = buf.getvalue()
    data = json.dumps(_jsonable(panels), sort_keys=True).replace("]]>", "]]&gt;")
    tag = svg.index(">", svg.index("<svg")) + 1
    svg = svg[:tag] + f'\n<metadata id="roughflow-data"><![CDATA[{data}]]></metadata>' + svg[tag:]
    Path(path).write_text(svg, encoding="utf-8")


# ----------------------------------------------------------------------------
# scenarios


def _p(r: Run, key):
    """Scenario parameter with the scenario default as fallback."""
    return r.cfg.params.get(key, SCENARIOS[r.cfg.scenario].defaults[key])


def _exponents(cfg):
    e = cfg.exponents
    return Exponents(e.d, e.r, e.q, e.sigma)


def _regime(r: Run):
    try:
        ex = _exponents(r.cfg)
        return dict(delta1=ex.delta1(), delta2=ex.delta2())
    except DomainError:
        return dict(delta1=None, delta2=None)


def scenario_norms(r: Run):
    drift = build_drift(r.cfg)
    pairs = _p(r, "pairs") or [[r.cfg.exponents.r, r.cfg.exponents.q]]
    T = _p(r, "T")
    box = _p(r, "box") or None
    r.headline["regime"] = _jsonable(_regime(r))
    for rr, qq in pairs:
        val, err = mixed_norm(drift, rr, qq, T, _p(r, "n_space"), _p(r, "n_time"), box)
        r.add("norm", val, err, 0, r=rr, q=qq, T=T)
        if drift.known_norm is not None:
            known = drift.known_norm(rr, qq, T)
            r.add("norm_closed_form", known, 0.0, 0, r=rr, q=qq, T=T)
            ok = abs(val - known) <= max(10 * err, 1e-3 * abs(known)) + 1e-14
            r.check(f"norm_r{rr}_q{qq}", ok, value=val, closed_form=known, error_estimate=err)
        else:
            r.check(f"norm_r{rr}_q{qq}", math.isfinite(val), value=val, error_estimate=err)


def scenario_kernel(r: Run):
    nu = r.cfg.exponents.sigma ** 2 / 2
    times = np.geomspace(_p(r, "t_min"), _p(r, "t_max"), _p(r, "n_times"))
    series = []
    for d, k, rr in _p(r, "cases"):
        d, k = int(d), int(k)
        spec = KernelSpec(d, nu, tuple(i % d for i in range(k)))
        fit = verify_lr_norm_bound(spec, rr, times)
        for s, v in zip(times, fit.norms):
            r.add("kernel_norm", v, 0.0, 0, d=d, k=k, r=rr, s=s)
        r.add("kernel_norm_exponent", fit.fitted_exponent, 0.0, 0, d=d, k=k, r=rr, expected=fit.expected_exponent)
        r.check(f"kernel_d{d}_k{k}_r{rr}", abs(fit.fitted_exponent - fit.expected_exponent) <= 0.01,
                fitted=fit.fitted_exponent, expected=fit.expected_exponent, constant=fit.constant)
        series.append(dict(x=(times * nu).tolist(), y=fit.norms.tolist(), label=f"d={d} k={k} r={rr}"))
    r.panel("kernel norms vs nu s", series, "nu s", "norm", logx=True, logy=True)


def beta_suite(ns, alphas, samples, seed, t0=0.0, t1=1.0, workers=1):
    combos = [(n, a) for n in ns for a in itertools.product(alphas, repeat=n + 1)]

    def one(i):
        n, a = combos[i]
        return n, a, B.beta_identity_check(n, a, t0, t1, samples, seed=derived_seed(seed, f"beta{i}"))

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(one, range(len(combos))))
    return [one(i) for i in range(len(combos))]


def catalog_agreement(mc_samples, seed, nu=0.5, t=1.0, coarse=(8, 8), workers=1):
    """MC vs nested quadrature on the sign-structured catalog; combined error ``hypot(SE, |coarse - fine|)``."""
    out = []
    for name, spec in B.sign_structured_catalog(nu, t):
        mc = B.evaluate_block(spec, mc_samples, seed=derived_seed(seed, name), workers=workers)
        fine = B.evaluate_block_deterministic(spec)
        crude = B.evaluate_block_deterministic(spec, B.QuadratureGrid(*coarse))
        comb = math.hypot(mc.stderr, abs(fine - crude))
        out.append(dict(name=name, mc=mc.estimate, stderr=mc.stderr, quadrature=fine, quad_error=abs(fine - crude),
                        z=(mc.estimate - fine) / comb, passed=abs(mc.estimate - fine) <= 3 * comb))
    return out


def block_scaling(windows, nu=0.5, integrand_name="sign"):
    spec = B.BlockIntegralSpec("I1", (B.integrand(integrand_name),), t=1.0, nu=nu)
    return B.scaling_exponent_fit(spec, windows, expected=0.5)


def scenario_blocks(r: Run):
    seed = r.cfg.numerics.seed
    suites = _p(r, "suites")
    if "beta" in suites:
        res = beta_suite(_p(r, "beta_n"), _p(r, "beta_alphas"), _p(r, "beta_samples"), seed, workers=r.workers)
        worst = 0.0
        for n, a, c in res:
            r.add("beta_identity", c.lhs, c.stderr, _p(r, "beta_samples"), n=n, alphas=list(a), rhs=c.rhs)
            worst = max(worst, c.rel_error)
        r.check("beta_identity", worst < 0.01, max_relative_error=worst, cases=len(res))
    if "catalog" in suites:
        res = catalog_agreement(r.cfg.numerics.mc_samples, seed, workers=r.workers)
        for c in res:
            r.add("block_mc", c["mc"], c["stderr"], r.cfg.numerics.mc_samples, name=c["name"])
            r.add("block_quadrature", c["quadrature"], c["quad_error"], 0, name=c["name"])
        r.check("block_oracle_agreement", all(c["passed"] for c in res), max_abs_z=max(abs(c["z"]) for c in res))
        spec = B.BlockIntegralSpec("I1", (B.integrand("z"),), t=1.0)
        mc = B.evaluate_block(spec, r.cfg.numerics.mc_samples, seed=derived_seed(seed, "I1z"), workers=r.workers)
        r.add("block_I1_linear", mc.estimate, mc.stderr, r.cfg.numerics.mc_samples, closed_form=-1.0)
        r.check("block_I1_linear_closed_form", abs(mc.estimate + 1.0) <= 2 * mc.stderr, estimate=mc.estimate,
                stderr=mc.stderr)
        r.panel("block MC minus quadrature (units of combined error)",
                [dict(x=list(range(len(res))), y=[c["z"] for c in res], style="o")], "catalog entry", "z",
                hline=[-3, 3])
    if "scaling" in suites:
        lo, hi, k = _p(r, "scaling_windows")
        w = np.geomspace(lo, hi, int(k))
        fit = block_scaling(w)
        for L, e in zip(fit.windows, fit.estimates):
            r.add("block_I1_sign", e, 0.0, 0, window=L)
        r.add("block_scaling_slope", fit.slope, 0.0, 0, expected=0.5)
        r.check("block_scaling", abs(fit.slope - 0.5) <= 0.05, slope=fit.slope, residual=fit.residual)
        r.panel("|I1| vs window", [dict(x=fit.windows.tolist(), y=np.abs(fit.estimates).tolist(), label="sign")],
                "t", "|I1|", logx=True, logy=True)


def scenario_flow(r: Run):
    cfg = r.cfg
    drift = build_drift(cfg)
    sigma = cfg.exponents.sigma
    n = cfg.numerics
    pts = lattice_points(cfg)
    t = n.t_final
    checks = _p(r, "checks")
    if "jacobian_fd" in checks:
        c = check_jacobian_fd(drift, sigma, n.dt, t, n.n_paths, pts, derived_seed(n.seed, "fd"))
        r.add("jacobian_fd_rel_error", c["max_rel_euler"], 0.0, n.n_paths, scheme="euler")
        r.add("jacobian_fd_rel_error", c["max_rel_heun"], 0.0, n.n_paths, scheme="heun")
        r.check("jacobian_fd", c["passed"], **c)
    if "liouville" in checks and drift.divergence_free:
        c = check_liouville(drift, sigma, n.dt, t, n.n_paths, pts, derived_seed(n.seed, "liouville"), n.out_stride)
        r.add("det_deviation", c["max_det_deviation"], 0.0, n.n_paths)
        r.check("liouville", c["passed"], **c)
    if "girsanov" in checks:
        c = check_girsanov(drift, sigma, n.dt, t, n.n_paths, pts[0], derived_seed(n.seed, "girsanov"))
        r.add("girsanov_mean", c["mean"], c["stderr"], n.n_paths)
        r.check("girsanov", c["passed"], **c)
    if "dyson" in checks:
        td = min(0.5, t)
        c = check_dyson(drift, sigma, n.dt, td, pts[0], derived_seed(n.seed, "dyson"))
        r.add("dyson_error", c["error"], 0.0, 1, floor=c["floor"], t=td)
        r.check("dyson", c["passed"], **c)
        r.panel("Dyson term norms", [dict(x=list(range(len(c["term_norms"]))), y=c["term_norms"])], "term", "norm",
                logy=True)


def scenario_moments(r: Run):
    cfg = r.cfg
    drift = build_drift(cfg)
    n = cfg.numerics
    pts = lattice_points(cfg)
    t = n.t_final
    lat = BrownianLattice(n.dt, int(round(t / n.dt)), drift.d, n.seed, n.n_paths)
    ens = simulate_flow(drift, lat, pts, cfg.exponents.sigma, t, out_stride=n.out_stride, batch_size=n.batch_size,
                        jacobians=True, inverse=True)
    ps = _p(r, "p")
    reps = [moment_estimate(ens, p, t) for p in ps]
    for rep in reps:
        r.add(rep)
    est = np.array([rep.estimate for rep in reps])
    mono = bool(np.all(np.diff(est) >= -3 * np.array([rep.stderr for rep in reps])[1:]))
    r.check("moments_finite_monotone", np.all(np.isfinite(est)) and mono, estimates=est, excluded=ens.n_flagged)
    regime = _regime(r)
    lam = np.asarray(_p(r, "lambdas"), float)
    tc = tail_probability(ens, lam, t, point=reps[0].params["argmax"], delta1=regime["delta1"])
    for l, pr, lo, hi in zip(lam, tc.prob, tc.lower, tc.upper):
        r.add("tail_probability", pr, 0.0, tc.n_samples, **{"lambda": l, "lower": lo, "upper": hi})
    r.headline["tail_fit"] = _jsonable(dict(slope=tc.fitted_slope, reference=tc.reference_slope,
                                            censored=int(tc.censored.sum()), diagnostic_only=True))
    r.check("tail_monotone", bool(np.all(np.diff(tc.prob) <= 0)))
    r.panel("survival of |D_aX|", [dict(x=lam.tolist(), y=tc.prob.tolist())], "lambda", "P", logy=False)
    deltas = _p(r, "modulus_deltas")
    if deltas and drift.d == 1:
        mreps, slope = modulus_scaling(ens, deltas, _p(r, "ell"), t)
        for m in mreps:
            r.add(m)
        r.headline["modulus_slope"] = slope
        r.check("modulus_nondecreasing", all(a.estimate <= b.estimate + 3 * (a.stderr + b.stderr)
                                             for a, b in zip(mreps, mreps[1:])))
        r.panel("modulus vs delta", [dict(x=list(deltas), y=[m.estimate for m in mreps])], "delta", "E sup",
                logx=True, logy=True)


def scenario_khasminskii(r: Run):
    cfg = r.cfg
    drift = build_drift(cfg)
    n = cfg.numerics
    sigma = cfg.exponents.sigma
    pts = lattice_points(cfg)
    t = n.t_final
    lat = BrownianLattice(n.dt, int(round(t / n.dt)), drift.d, n.seed, n.n_paths)
    F = path_energy(drift, lat, pts, sigma, t)
    # t-scaling of the sup over the lattice of the first moment
    ts = np.asarray(_p(r, "t_grid"), float)
    sup_m = [float(batch_means(path_energy(drift, lat, pts, sigma, s))[0].max()) for s in ts]
    jensen, mono = True, True
    prev = None
    for lam in _p(r, "lambdas"):
        k = khasminskii_functional(drift, lat, pts, lam, t, sigma)
        r.add(k.exponential)
        r.add(k.first_moment)
        jensen &= k.diverged or math.exp(lam * k.first_moment.estimate) <= k.exponential.estimate
        vals = np.exp(lam * k.path_integrals)
        if prev is not None:
            mono &= bool(np.all(vals >= prev))
        prev = vals
    half = path_energy(drift, lat, pts, sigma, ts[0])
    mono &= bool(np.all(F >= half))
    r.check("khasminskii_jensen", jensen)
    r.check("khasminskii_monotone", mono)
    for s, m in zip(ts, sup_m):
        r.add("khasminskii_sup_first_moment", m, 0.0, n.n_paths, t=s)
    positive = np.array(sup_m) > 0
    slope = float(np.polyfit(np.log(ts[positive]), np.log(np.array(sup_m)[positive]), 1)[0]) if positive.sum() > 1 else None
    reg = _regime(r)
    r.headline["t_scaling"] = _jsonable(dict(slope=slope, reference=None if reg["delta1"] is None else 2 * reg["delta1"],
                                             diagnostic_only=True))
    if drift.name == "constant":
        c2 = float(np.sum(np.asarray(drift.params["c"]) ** 2))
        dev = float(np.max(np.abs(F - c2 * t)))
        r.check("khasminskii_constant_closed_form", dev <= 1e-12 * max(1.0, c2 * t), deviation=dev)
    if _p(r, "reference"):
        c = check_khasminskii_reference(drift, sigma, n.dt, t, n.n_paths, pts[0], n.seed,
                                        factor=_p(r, "reference_factor"))
        r.add("khasminskii_reference_first_moment", c["reference"], c["reference_stderr"],
              _p(r, "reference_factor") * n.n_paths)
        r.check("khasminskii_reference", c["passed"], **c)
    r.panel("sup_a E int |u|^2 vs t", [dict(x=ts.tolist(), y=sup_m)], "t", "first moment", logx=True, logy=True)


def scenario_symplectic(r: Run):
    cfg = r.cfg
    n = cfg.numerics
    H = HAMILTONIANS[cfg.drift.params.get("H", "harmonic")](
        **{k: v for k, v in cfg.drift.params.items() if k != "H"})
    pts = lattice_points(cfg)
    for sigma in _p(r, "sigmas"):
        c = check_symplectic(H, sigma, _p(r, "dts"), n.t_final, n.n_paths, pts[0], derived_seed(n.seed, f"s{sigma}"))
        for dt, res, hres, cres in zip(_p(r, "dts"), c["residuals"], c["heun_residuals"], c["control_residuals"]):
            r.add("symplectic_residual", res, 0.0, n.n_paths, sigma=sigma, dt=dt, scheme="euler")
            r.add("symplectic_residual", hres, 0.0, n.n_paths, sigma=sigma, dt=dt, scheme="heun")
            r.add("symplectic_control_residual", cres, 0.0, n.n_paths, sigma=sigma, dt=dt)
        r.check(f"symplectic_sigma{sigma}", c["passed"], ratio=c["ratio"], control_ratio=c["control_ratio"])
        r.panel(f"residual vs dt (sigma={sigma})",
                [dict(x=list(_p(r, "dts")), y=c["residuals"], label="euler tangent"),
                 dict(x=list(_p(r, "dts")), y=c["heun_residuals"], label="heun"),
                 dict(x=list(_p(r, "dts")), y=c["control_residuals"], label="gradient control")],
                "dt", "residual", logx=True, logy=True)


def circulation_samples(drift, sigma, grid, Z, dt, t, n_paths, seed, n_test_times=20, batch_size=500):
    lat = BrownianLattice(dt, int(round(t / dt)), 2, seed, n_paths)
    stride = lat.n_steps // n_test_times
    C = batched_process(lambda e: circulation_process(e, drift, Z, grid), drift, lat, grid.points, sigma, t,
                        out_stride=stride, batch_size=batch_size)
    return np.linspace(0, t, n_test_times + 1), C


def vorticity_samples(drift, sigma, points, dt, t, n_paths, seed, n_test_times=20):
    lat = BrownianLattice(dt, int(round(t / dt)), 2, seed, n_paths)
    ens = simulate_flow(drift, lat, points, sigma, t, out_stride=lat.n_steps // n_test_times, batch_size=2000)
    return ens.times, vorticity_process(ens, drift)


def scenario_circulation(r: Run):
    cfg = r.cfg
    n = cfg.numerics
    drift = build_drift(cfg)
    nu = drift.params.get("nu", 0.1)
    sigma = math.sqrt(2 * nu)
    if not math.isclose(sigma, cfg.exponents.sigma, rel_tol=1e-9):
        raise ConfigError(f"exponents.sigma must equal sqrt(2 nu) = {sigma} for the manufactured solution")
    c = np.asarray(_p(r, "center"), float)
    R = _p(r, "radius")
    grid = TensorGrid.box(c - R, c + R, _p(r, "grid_n"))
    Z = stream_vector_field(c, R)
    m = _p(r, "n_test_times")
    times, C = circulation_samples(drift, sigma, grid, Z, n.dt, n.t_final, n.n_paths, derived_seed(n.seed, "circ"), m,
                                   n.batch_size)
    rep = martingale_statistic(C, times)
    power = rejection_rate(C, times, _p(r, "planted_slope_circulation"), _p(r, "n_boot"), derived_seed(n.seed, "boot"))
    for tt, mi, se, z in zip(times[1:], rep.mean_increments, rep.stderr, rep.z):
        r.add("circulation_increment", mi, se, rep.n_paths, t=tt, z=z)
    r.check("circulation_martingale", rep.passed, max_abs_z=rep.max_abs_z, threshold=rep.threshold)
    r.check("circulation_power", power >= 0.95, rejection_rate=power, slope=_p(r, "planted_slope_circulation"))
    strips = [dict(x=times[1:].tolist(), y=rep.z.tolist(), label="circulation")]
    pts = np.asarray(_p(r, "vorticity_points"), float)
    vt, W = vorticity_samples(drift, sigma, pts, n.dt, n.t_final, n.n_paths, derived_seed(n.seed, "vort"), m)
    level = 0.05 / len(pts)
    ok, powers = True, []
    for j in range(len(pts)):
        vr = martingale_statistic(W[:, :, j], vt, level=level)
        pw = rejection_rate(W[:, :, j], vt, _p(r, "planted_slope_vorticity"), _p(r, "n_boot"),
                            derived_seed(n.seed, f"vboot{j}"), level=level)
        powers.append(pw)
        ok &= vr.passed
        r.add("vorticity_max_abs_z", vr.max_abs_z, 0.0, vr.n_paths, point=pts[j], threshold=vr.threshold)
        strips.append(dict(x=vt[1:].tolist(), y=vr.z.tolist(), label=f"vorticity a={pts[j].tolist()}"))
    r.check("vorticity_martingale", ok)
    r.check("vorticity_power", min(powers) >= 0.95, rejection_rates=powers)
    r.panel("martingale z-scores", strips, "t", "z", hline=[-rep.threshold, rep.threshold])


def scenario_grr(r: Run):
    cfg = r.cfg
    n = cfg.numerics
    drift = build_drift(cfg)
    if drift.d != 1:
        raise ConfigError("grr scenario needs a one-dimensional drift")
    from .fields import zero

    drifts = [("zero", zero(1))] + ([(drift.name, drift)] if drift.name != "zero" else [])
    c = check_grr(drifts, cfg.exponents.sigma, _p(r, "resolutions"), n.n_paths, n.seed, _p(r, "beta"), _p(r, "p"),
                  _p(r, "ell"), n.t_final, _p(r, "delta"))
    for case in c["cases"]:
        r.add("grr_max_ratio", case["max_ratio"], 0.0, n.n_paths, drift=case["drift"], resolution=case["resolution"],
              C=case["C"])
    r.check("grr", c["passed"], cases=c["cases"])


@dataclass(frozen=True)
class Scenario:
    name: str
    anchor: str
    description: str
    func: object
    defaults: dict
    base: dict  # overrides of the generic config defaults


SCENARIOS = {
    s.name: s
    for s in [
        Scenario("norms", "mixed space-time Lebesgue norms of the drift and the critical exponents",
                 "Nested Simpson L^{r,q} norms of a catalog drift, checked against closed forms when available.",
                 scenario_norms, dict(pairs=[], T=1.0, n_space=65, n_time=33, box=[]),
                 dict(drift=dict(name="zero", params=dict(d=1)))),
        Scenario("kernel", "heat-kernel derivative L^r norm bounds",
                 "Log-log slope of the L^{r'} norm of heat-kernel derivatives against -d/(2r) - k/2.",
                 scenario_kernel,
                 dict(cases=[[1, 0, 2.0], [1, 1, math.inf], [2, 2, 4.0]], t_min=2.0**-6, t_max=1.0, n_times=7), {}),
        Scenario("blocks", "Beta-Gamma simplex identity and Gaussian block integrals",
                 "Beta identity Monte Carlo, block-integral MC vs quadrature oracle, and window scaling.",
                 scenario_blocks,
                 dict(suites=["beta", "catalog", "scaling"], beta_n=[1, 2, 3], beta_alphas=[0.5, 1.0, 2.0],
                      beta_samples=1_000_000, scaling_windows=[0.01, 1.0, 9]), {}),
        Scenario("flow", "variational equation, Dyson series, volume preservation and Girsanov weight",
                 "Jacobian vs finite differences, Liouville determinant, Dyson partial sums, Girsanov mean.",
                 scenario_flow, dict(checks=["jacobian_fd", "liouville", "girsanov", "dyson"]),
                 dict(drift=dict(name="smooth_bump", params=dict(d=2, amplitude=1.0, width=1.0)),
                      exponents=dict(d=2), numerics=dict(dt=1e-3, n_paths=100,
                                                         lattice=dict(lo=[0.2, -0.1], hi=[0.2, -0.1], n=[1, 1])))),
        Scenario("moments", "moment, tail and modulus bounds for the flow and its Jacobian",
                 "Lattice-max Jacobian moments, survival curve with Wilson intervals, modulus of continuity.",
                 scenario_moments,
                 dict(p=[2, 4, 8], lambdas=[0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0], modulus_deltas=[0.2, 0.4, 0.8],
                      ell=1.0),
                 dict(drift=dict(name="smooth_bump", params=dict(d=1, amplitude=2.0, width=0.5)),
                      numerics=dict(n_paths=2000, lattice=dict(lo=[-1.0], hi=[1.0], n=[41])))),
        Scenario("khasminskii", "exponential moments of path energies via Khasminskii's argument",
                 "E exp(lambda int |u|^2) and E int |u|^2 along drift-free paths, with a self-refined reference.",
                 scenario_khasminskii,
                 dict(lambdas=[0.1, 0.5, 1.0], t_grid=[0.125, 0.25, 0.5, 1.0], reference=True, reference_factor=10),
                 dict(drift=dict(name="smooth_bump", params=dict(d=1, amplitude=1.0, width=0.5)),
                      numerics=dict(dt=0.005, n_paths=10_000, lattice=dict(lo=[0.0], hi=[0.0], n=[1])))),
        Scenario("symplectic", "symplecticity of Hamiltonian stochastic flows",
                 "Residual |J^T Omega J - Omega| under dt halving with and without noise; gradient-drift control.",
                 scenario_symplectic, dict(dts=[0.02, 0.01], sigmas=[0.0, 1.0]),
                 dict(drift=dict(name="hamiltonian", params=dict(H="harmonic")), exponents=dict(d=2),
                      numerics=dict(n_paths=200, lattice=dict(lo=[0.3, -0.2], hi=[0.3, -0.2], n=[1, 1])))),
        Scenario("circulation", "circulation and vorticity martingales for backward Navier-Stokes flows",
                 "Zero-mean-increment tests with Bonferroni correction and planted-drift power checks.",
                 scenario_circulation,
                 dict(center=[math.pi / 2, math.pi / 2], radius=1.2, grid_n=12, n_test_times=20,
                      planted_slope_circulation=0.02, planted_slope_vorticity=0.1, n_boot=200,
                      vorticity_points=[[1.0, 1.2], [2.0, 0.5], [0.7, 2.2]]),
                 dict(drift=dict(name="taylor_green_backward", params=dict(nu=0.1, T=1.0, amplitude=1.0)),
                      exponents=dict(d=2, sigma=math.sqrt(0.2)),
                      numerics=dict(dt=0.01, n_paths=20_000, batch_size=500,
                                    lattice=dict(lo=[0.0, 0.0], hi=[0.0, 0.0], n=[1, 1])))),
        Scenario("grr", "Garsia-Rodemich-Rumsey bound for the space-time flow field",
                 "Both sides of the GRR inequality per path, constant fitted on an independent calibration run.",
                 scenario_grr,
                 dict(beta=0.5, p=6.0, ell=1.0, delta=0.2, resolutions=[[21, 20], [41, 40]]),
                 dict(drift=dict(name="smooth_bump", params=dict(d=1, amplitude=2.0, width=0.5)),
                      numerics=dict(n_paths=30))),
    ]
}


def _merge(base, over):
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(base[k], v) if isinstance(v, dict) and isinstance(base.get(k), dict) and k != "params" else v
    return out


def default_config(name) -> ExperimentConfig:
    """The documented default configuration of a scenario."""
    s = SCENARIOS[name]
    base = ExperimentConfig(name).to_dict()
    data = _merge(base, s.base)
    data["params"] = dict(s.defaults)
    return config_from_dict(data)


def list_scenarios():
    """Machine-readable catalog: name, anchor, description, parameter defaults and default config."""
    return [
        dict(name=s.name, anchor=s.anchor, description=s.description, parameters=_jsonable(s.defaults),
             default_config=_jsonable(default_config(s.name).to_dict()))
        for s in SCENARIOS.values()
    ]
