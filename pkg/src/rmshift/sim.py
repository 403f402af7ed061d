"""Seeded scenario engine driving the coupled shift and curve estimators.

Random streams
--------------
Every curve of every replicate has its own PCG64 stream seeded with
``SeedSequence(seed, spawn_key=(replicate, curve))``. Within a curve all
design points are drawn first (inverse CDF of ``rng.random``), then all
noise terms (``rng.standard_normal``). A replicate's output therefore does
not depend on which other replicates run, or in which order.
"""

import configparser
import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import nw, rm
from .errors import ConfigError, RMShiftError
from .model import (
    CosineDensity,
    CosineSum,
    MixedShape,
    ModelSpec,
    TabulatedDensity,
    TabulatedShape,
    UniformDensity,
    load_table,
)

MAX_SEED = 2 ** 64 - 1
FULL_TRACE_LIMIT = 10_000


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NWSettings:
    grid_points: int = 101
    kernel: str = "uniform"
    alpha: float = 0.9

    def __post_init__(self):
        nw.get_kernel(self.kernel)
        if self.grid_points < 2:
            raise ConfigError(f"grid_points must be >= 2, got {self.grid_points!r}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    """Declarative description of one simulation experiment.

    ``regime_breaks`` is a sequence of ``(first_curve_index, theta)`` pairs;
    when non-empty it overrides ``model.theta`` and turns the run into a
    change-detection experiment.
    """

    model: ModelSpec
    rm: rm.RMConfig
    n_per_curve: int = 1000
    n_curves: int = 1
    regime_breaks: tuple = ()
    nw: NWSettings = field(default_factory=NWSettings)
    seed: int = 0
    replicates: int = 1
    level: float = 0.95
    cumulative: bool = False
    name: str = "scenario"

    def __post_init__(self):
        if self.n_per_curve < 1 or self.n_curves < 1:
            raise ConfigError("n_per_curve and n_curves must be positive")
        if not 0 <= self.seed <= MAX_SEED:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.replicates < 1:
            raise ConfigError(f"replicates must be >= 1, got {self.replicates!r}")
        if not 0 < self.level < 1:
            raise ConfigError(f"level must lie in (0, 1), got {self.level!r}")
        breaks = tuple((int(c), float(t)) for c, t in self.regime_breaks)
        object.__setattr__(self, "regime_breaks", breaks)
        thetas = [t for _, t in breaks] or [self.model.theta]
        for t in thetas:
            if not abs(t) < min(self.rm.projection_radius, 0.25):
                raise ConfigError(f"regime_breaks: theta {t!r} outside the projection interval")
        if breaks:
            starts = [c for c, _ in breaks]
            if len(breaks) < 2:
                raise ConfigError("regime_breaks needs at least two regimes")
            if starts[0] != 0:
                raise ConfigError("regime_breaks: first regime must start at curve 0")
            if any(b <= a for a, b in zip(starts, starts[1:])) or starts[-1] >= self.n_curves:
                raise ConfigError("regime_breaks: a regime has zero curves")

    @property
    def n_total(self):
        return self.n_per_curve * self.n_curves

    def curve_thetas(self):
        """True shift and regime index for every curve."""
        if not self.regime_breaks:
            return [(self.model.theta, 0)] * self.n_curves
        out = []
        starts = [c for c, _ in self.regime_breaks] + [self.n_curves]
        for r, (c0, theta) in enumerate(self.regime_breaks):
            out += [(theta, r)] * (starts[r + 1] - c0)
        return out

    def describe(self):
        m = self.model
        return {
            "name": self.name,
            "shape": m.f.description,
            "density": m.g.description,
            "sigma2": m.sigma2,
            "theta": m.theta,
            "f1": m.f1,
            "g1": m.g1,
            "n_per_curve": self.n_per_curve,
            "n_curves": self.n_curves,
            "regime_breaks": [list(b) for b in self.regime_breaks],
            "rm": asdict(self.rm),
            "nw": asdict(self.nw),
            "seed": self.seed,
            "replicates": self.replicates,
            "level": self.level,
            "cumulative": self.cumulative,
        }


MODE_ALIASES = {
    "sign": "symmetric_sign",
    "known": "efficient_known_f1",
    "adaptive": "efficient_adaptive",
    "nonsym": "nonsymmetric",
}
_KEYS = {
    "name", "model", "p", "shape_file", "shape_symmetric", "density", "density_b",
    "density_file", "sigma2", "theta", "n_per_curve", "n_curves", "regime_breaks",
    "mode", "f1_sign", "f1", "g1", "gamma0", "a", "projection_radius", "theta0",
    "sign_freeze_threshold", "alpha", "kernel", "grid_points", "seed", "replicates",
    "level", "cumulative",
}


def _get(mapping, key, conv, default=None):
    if key not in mapping:
        return default
    raw = mapping[key]
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from None


def _bool(raw):
    if isinstance(raw, bool):
        return raw
    value = str(raw).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _int(raw):
    value = float(raw) if not isinstance(raw, int) else raw
    if value != int(value):
        raise ValueError("expected an integer")
    return int(value)


def _breaks(raw):
    if not isinstance(raw, str):
        return tuple(raw)
    out = []
    for item in raw.replace(";", ",").split(","):
        if item.strip():
            c, t = item.split(":")
            out.append((_int(c), float(t)))
    return tuple(out)


def _resolve_path(value, base):
    path = Path(value)
    return path if path.is_absolute() or base is None else Path(base) / path


def model_from_mapping(mapping, base_dir=None, theta=None):
    """Build a :class:`ModelSpec` from flat configuration keys."""
    kind = str(mapping.get("model", "experiment1")).strip().lower()
    if kind in ("experiment1", "cosine_sum"):
        shape = CosineSum(_get(mapping, "p", _int, 8))
        sigma2, theta_default = 1.0, 0.1
    elif kind in ("experiment2", "mixed"):
        shape = MixedShape()
        sigma2, theta_default = 0.2, -0.2
    elif kind == "tabulated":
        if "shape_file" not in mapping:
            raise ConfigError("shape_file: required for model = tabulated")
        x, v = load_table(_resolve_path(mapping["shape_file"], base_dir))
        shape = TabulatedShape(x, v, symmetric=_get(mapping, "shape_symmetric", _bool, False))
        sigma2, theta_default = 1.0, 0.0
    else:
        raise ConfigError(f"model: unknown model {kind!r}")

    density = str(mapping.get("density", "uniform")).strip().lower()
    if density == "uniform":
        g = UniformDensity()
    elif density == "cosine":
        g = CosineDensity(_get(mapping, "density_b", float, 0.5))
    elif density == "tabulated":
        if "density_file" not in mapping:
            raise ConfigError("density_file: required for density = tabulated")
        g = TabulatedDensity(*load_table(_resolve_path(mapping["density_file"], base_dir)))
    else:
        raise ConfigError(f"density: unknown density {density!r}")

    if theta is None:
        theta = _get(mapping, "theta", float, theta_default)
    sigma2 = _get(mapping, "sigma2", float, sigma2)
    try:
        return ModelSpec(shape, g, sigma2, theta)
    except ConfigError as exc:
        raise ConfigError(f"model: {exc}") from None


def config_from_mapping(mapping, base_dir=None):
    """Build a :class:`ScenarioConfig` from flat ``key -> value`` pairs."""
    unknown = set(mapping) - _KEYS
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown configuration key")
    breaks = _get(mapping, "regime_breaks", _breaks, ())
    theta = breaks[0][1] if breaks else None
    model = model_from_mapping(mapping, base_dir, theta=theta)

    mode = str(mapping.get("mode", "symmetric_sign" if model.symmetric else "nonsymmetric"))
    mode = MODE_ALIASES.get(mode, mode)
    rm_kwargs = {}
    for key, conv in (("f1_sign", _int), ("f1", float), ("g1", float), ("gamma0", float),
                      ("a", float), ("projection_radius", float), ("theta0", float),
                      ("sign_freeze_threshold", float)):
        value = _get(mapping, key, conv)
        if value is not None:
            rm_kwargs[key] = value
    try:
        rm_config = rm.RMConfig.for_model(model, mode=mode, **rm_kwargs)
        nw_settings = NWSettings(
            grid_points=_get(mapping, "grid_points", _int, 101),
            kernel=str(mapping.get("kernel", "uniform")),
            alpha=_get(mapping, "alpha", float, 0.9),
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return ScenarioConfig(
        model=model,
        rm=rm_config,
        n_per_curve=_get(mapping, "n_per_curve", _int, 1000),
        n_curves=_get(mapping, "n_curves", _int, 1),
        regime_breaks=breaks,
        nw=nw_settings,
        seed=_get(mapping, "seed", _int, 0),
        replicates=_get(mapping, "replicates", _int, 1),
        level=_get(mapping, "level", float, 0.95),
        cumulative=_get(mapping, "cumulative", _bool, False),
        name=str(mapping.get("name", "scenario")),
    )


BUNDLED_CONFIGS = Path(__file__).parent / "configs"


def load_config(path, **overrides):
    """Read a flat ``key = value`` config file (``#`` comments allowed).

    ``path`` may also name a bundled config (``experiment1``, ``experiment2``).
    Keyword overrides replace file values.
    """
    path = Path(path)
    if not path.exists():
        bundled = BUNDLED_CONFIGS / f"{path.stem}.cfg"
        if path.parent == Path(".") and bundled.exists():
            path = bundled
        else:
            raise ConfigError(f"config: file {str(path)!r} not found")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string("[scenario]\n" + path.read_text(encoding="utf-8"))
    except configparser.Error as exc:
        raise ConfigError(f"config: {exc}") from None
    mapping = dict(parser["scenario"])
    mapping.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_mapping(mapping, base_dir=path.parent)


# --------------------------------------------------------------------------
# Data generation
# --------------------------------------------------------------------------

def stream(seed, replicate=0, curve=0):
    """Generator for one curve of one replicate."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replicate, curve))))


def generate_observation(model, rng):
    """One draw ``(x, y)`` with ``x ~ g`` and ``y = f(x - theta) + eps``."""
    x = float(model.g.sample(rng, 1)[0])
    eps = math.sqrt(model.sigma2) * rng.standard_normal()
    return x, float(model.f(x - model.theta)) + eps


def generate_observations(model, rng, size, theta=None):
    """Arrays ``x, y`` of ``size`` observations (``theta`` overrides the model's)."""
    theta = model.theta if theta is None else theta
    x = model.g.sample(rng, size)
    eps = rng.standard_normal(size) * math.sqrt(model.sigma2)
    return x, model.f(x - theta) + eps


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------

def thin_indices(n, full_limit=FULL_TRACE_LIMIT, geometric_points=400):
    """1-based step indices kept in a trace: all up to ``full_limit``, then geometric."""
    head = np.arange(1, min(n, full_limit) + 1)
    if n <= full_limit:
        return head
    tail = np.unique(np.geomspace(full_limit, n, geometric_points).astype(np.int64))
    return np.unique(np.concatenate([head, tail, [n]]))


@dataclass
class RunReport:
    scenario: dict
    final_theta_hat: float
    ci: rm.ConfidenceInterval | None
    ci_known: rm.ConfidenceInterval | None
    state: rm.RMState
    theta_hat_trace: tuple
    projection_count: int
    curve: nw.CurveBand | None = None
    delta_hat: float | None = None
    qsl_trace: tuple | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        def interval(ci):
            if ci is None:
                return None
            return {"lower": ci.lower, "upper": ci.upper, "level": ci.level,
                    "variance": ci.variance_used}

        return {
            "scenario": self.scenario,
            "final_theta_hat": self.final_theta_hat,
            "ci": interval(self.ci),
            "ci_known": interval(self.ci_known),
            "delta_hat": self.delta_hat,
            "projection_count": self.projection_count,
            "state": self.state.to_dict(),
            "diagnostics": _jsonable(self.diagnostics),
        }

    def write(self, outdir):
        """Write ``report.json`` plus ``trace.csv``, ``curve.csv`` and ``qsl.csv``."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "report.json", "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, allow_nan=False)
            fh.write("\n")
        idx, values = self.theta_hat_trace
        _write_csv(outdir / "trace.csv", ["n", "theta_hat"], zip(idx.tolist(), values.tolist()))
        if self.curve is not None:
            write_curve_csv(outdir / "curve.csv", self.curve)
        if self.qsl_trace is not None:
            idx, values = self.qsl_trace
            _write_csv(outdir / "qsl.csv", ["n", "qsl"], zip(idx.tolist(), values.tolist()))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_curve_csv(path, band):
    rows = zip(band.x.tolist(), band.f_hat.tolist(), band.lower.tolist(), band.upper.tolist())
    _write_csv(path, ["x", "f_hat", "ci_lower", "ci_upper"], rows)


# --------------------------------------------------------------------------
# Runs
# --------------------------------------------------------------------------

def curve_band(nw_state, spec, theta_hat, level, kernel):
    try:
        return nw.confidence_band(nw_state, spec, level, theta_hat=theta_hat, kernel=kernel)
    except RMShiftError:
        f_hat = nw.curve(nw_state)
        nan = np.full_like(f_hat, np.nan)
        return nw.CurveBand(nw_state.grid, f_hat, nan, nan, nan, level)


def _safe(fn, *args):
    try:
        return fn(*args), None
    except RMShiftError as exc:
        return None, str(exc)


def simulate(config, replicate=0, with_curve=True):
    """Run one replicate of a scenario and return its :class:`RunReport`.

    Observations stream through the shift recursion; observation ``k``
    enters the curve estimator centred at the estimate from step ``k - 1``.
    With regime breaks the shift estimator (and curve estimator) restarts at
    each new regime unless ``config.cumulative`` is set.
    """
    model, rmc = config.model, config.rm
    kernel = nw.get_kernel(config.nw.kernel)
    grid = nw.symmetric_grid(config.nw.grid_points)
    single = not config.regime_breaks
    theta_true = model.theta if single else None

    state = rm.RMState.initial(rmc, track_deviation=single)
    nw_state = nw.NWState.empty(grid, config.nw.alpha)
    paths = []
    per_curve = []
    previous_regime = 0
    for c, (theta, regime) in enumerate(config.curve_thetas()):
        if regime != previous_regime and not config.cumulative:
            state = rm.restart(rmc, state)
            nw_state = nw.NWState.empty(grid, config.nw.alpha)
        previous_regime = regime
        x, y = generate_observations(model, stream(config.seed, replicate, c), config.n_per_curve, theta)
        gx = model.g(x)
        start = state.theta_hat
        state, path = rm.run(rmc, x, y, gx, state=state, theta_true=theta_true)
        if with_curve:
            prev = np.concatenate([[start], path[:-1]])
            nw_state = nw.update_batch(nw_state, kernel, x, y, prev)
        paths.append(path)
        per_curve.append((regime, state.theta_hat))

    path = np.concatenate(paths)
    final_theta = config.curve_thetas()[-1][0]
    final_model = model if single else model.with_theta(final_theta)
    diagnostics = {}

    var_hat, err = _safe(rm.variance_estimate, state, rmc)
    ci = rm.confidence_interval(state, var_hat, config.level) if var_hat is not None else None
    if err:
        diagnostics["plug_in_variance_error"] = err
    var_known, err = _safe(rm.theoretical_variance, rmc, final_model, state.n)
    ci_known = rm.confidence_interval(state, var_known, config.level) if var_known is not None else None
    if err:
        diagnostics["known_variance_error"] = err

    idx = thin_indices(path.size)
    report = RunReport(
        scenario=config.describe(),
        final_theta_hat=state.theta_hat,
        ci=ci,
        ci_known=ci_known,
        state=state,
        theta_hat_trace=(idx, path[idx - 1]),
        projection_count=state.projection_count,
        diagnostics=diagnostics,
    )
    diagnostics["replicate"] = replicate
    diagnostics["per_curve_estimates"] = [t for _, t in per_curve]
    if with_curve:
        report.curve = curve_band(nw_state, final_model, state.theta_hat, config.level, kernel)
    if single:
        qidx = idx[idx >= 2]
        ssd = np.cumsum((path - model.theta) ** 2)
        report.qsl_trace = (qidx, ssd[qidx - 1] / np.log(qidx))
        diagnostics["qsl"] = float(ssd[-1] / math.log(path.size)) if path.size >= 2 else None
        diagnostics["xi2"] = var_known
    else:
        n_regimes = len(config.regime_breaks)
        means = [float(np.mean([t for r, t in per_curve if r == k])) for k in range(n_regimes)]
        diagnostics["regime_means"] = means
        report.delta_hat = means[-1] - means[0]
    return report


def _simulate_task(args):
    config, replicate, with_curve = args
    return simulate(config, replicate, with_curve)


def run_replicates(config, jobs=1, with_curve=False):
    """Reports for replicates ``0 .. config.replicates - 1``, in index order."""
    tasks = [(config, r, with_curve) for r in range(config.replicates)]
    if jobs is None or jobs <= 1 or config.replicates == 1:
        return [_simulate_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_simulate_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def _coverage(reports, attr, theta):
    hits = [getattr(r, attr).covers(theta) for r in reports if getattr(r, attr) is not None]
    return float(np.mean(hits)) if hits else None


def monte_carlo_summary(config, reports):
    """Across-replicate statistics of final estimates (and of delta_hat)."""
    finals = np.array([r.final_theta_hat for r in reports])
    out = {
        "replicates": len(reports),
        "mean_theta_hat": float(finals.mean()),
        "sd_theta_hat": float(finals.std(ddof=1)) if finals.size > 1 else 0.0,
    }
    if not config.regime_breaks:
        out["coverage_plug_in"] = _coverage(reports, "ci", config.model.theta)
        out["coverage_known"] = _coverage(reports, "ci_known", config.model.theta)
    else:
        deltas = np.array([r.delta_hat for r in reports])
        target = config.regime_breaks[-1][1] - config.regime_breaks[0][1]
        out["delta_target"] = target
        out["mean_delta_hat"] = float(deltas.mean())
        out["delta_within_0.05"] = float(np.mean(np.abs(deltas - target) <= 0.05))
    return out


def run_experiment_single(config, jobs=1, with_curve=True):
    """Single-regime experiment: replicate 0 report, plus a Monte Carlo summary
    over all replicates when ``config.replicates > 1``."""
    if config.regime_breaks:
        raise ConfigError("regime_breaks: use run_experiment_change for change scenarios")
    report = simulate(config, 0, with_curve)
    if config.replicates > 1:
        report.diagnostics["monte_carlo"] = monte_carlo_summary(
            config, run_replicates(config, jobs, with_curve=False))
    return report


def run_experiment_change(config, jobs=1, with_curve=True):
    """Change-detection experiment; ``delta_hat`` is last minus first regime mean."""
    if not config.regime_breaks:
        raise ConfigError("regime_breaks: change experiment needs at least two regimes")
    report = simulate(config, 0, with_curve)
    if config.replicates > 1:
        report.diagnostics["monte_carlo"] = monte_carlo_summary(
            config, run_replicates(config, jobs, with_curve=False))
    return report


def run_experiment(config, jobs=1, with_curve=True):
    if config.regime_breaks:
        return run_experiment_change(config, jobs, with_curve)
    return run_experiment_single(config, jobs, with_curve)


def clt_diagnostic(config, jobs=1, with_curve=True, reports=None):
    """Normality checks for the shift estimate (and pointwise for the curve).

    Standardizes ``sqrt(n) (theta_hat_n - theta)`` by the theoretical
    asymptotic variance and reports its sample mean, variance and the
    Kolmogorov-Smirnov distance to N(0, 1). With ``with_curve`` the same is
    done for ``sqrt(n h_n) (f_hat_n(x) - f(x))`` at every grid point.
    """
    if config.regime_breaks:
        raise ConfigError("regime_breaks: clt_diagnostic needs a single regime")
    if config.replicates < 200:
        raise ConfigError(f"replicates: clt_diagnostic needs >= 200, got {config.replicates}")
    if reports is None:
        reports = run_replicates(config, jobs, with_curve)
    n, theta = config.n_total, config.model.theta
    target = rm.theoretical_variance(config.rm, config.model, n)
    scaled = math.sqrt(n) * (np.array([r.final_theta_hat for r in reports]) - theta)
    out = {
        "n": n,
        "replicates": len(reports),
        "target_variance": target,
        "sample_mean": float(scaled.mean()),
        "sample_variance": float(scaled.var(ddof=1)),
        "variance_ratio": float(scaled.var(ddof=1) / target) if target > 0 else None,
    }
    if target > 0:
        z = scaled / math.sqrt(target)
        out["z_mean"] = float(z.mean())
        out["z_variance"] = float(z.var(ddof=1))
        out["ks_distance"] = float(stats.kstest(z, "norm").statistic)
    if with_curve:
        grid = reports[0].curve.x
        h = n ** -config.nw.alpha
        f_true = config.model.f(grid)
        kernel = nw.get_kernel(config.nw.kernel)
        v2 = np.array([nw.nw_asymptotic_variance(config.model, float(x), config.nw.alpha, kernel.nu2)
                       for x in grid])
        errs = np.array([r.curve.f_hat for r in reports]) - f_true
        scaled_f = math.sqrt(n * h) * errs
        ratio = np.nanvar(scaled_f, axis=0, ddof=1) / v2 if config.model.sigma2 > 0 else None
        ks = np.array([stats.kstest(col[np.isfinite(col)] / math.sqrt(v), "norm").statistic
                       if v > 0 and np.isfinite(col).sum() > 1 else np.nan
                       for col, v in zip(scaled_f.T, v2)])
        out["nw_grid"] = grid
        out["nw_variance_ratio"] = ratio
        out["nw_ks_distance"] = ks
        if ratio is not None:
            out["nw_variance_ratio_median"] = float(np.nanmedian(ratio))
    return out
