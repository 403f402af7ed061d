"""Command-line front end: ``rmshift simulate | estimate | oracle``.

Exit status 0 on success, 2 for configuration/usage errors, 3 for runtime,
numeric or data errors.
"""

import argparse
import csv
import math
import sys
from dataclasses import asdict
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import model as mdl
from . import nw, rm, sim
from .errors import ConfigError, RMShiftError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class DataError(RMShiftError):
    """Malformed or out-of-range input data."""


def _add_estimation_flags(p, defaults):
    p.add_argument("--mode", choices=["sign", "known", "adaptive", "nonsym"], default=defaults)
    p.add_argument("--f1", type=float)
    p.add_argument("--g1", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--kernel", choices=sorted(nw.KERNELS))
    p.add_argument("--grid-points", type=int)
    p.add_argument("--level", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="rmshift", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a simulation scenario from a config file")
    p.add_argument("--config", required=True,
                   help="config file, or the name of a bundled config (experiment1, experiment2)")
    p.add_argument("--output", required=True, type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--replicates", type=int)
    _add_estimation_flags(p, None)

    p = sub.add_parser("estimate", help="estimate shift and curve from a CSV file")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--output", required=True, type=Path)
    p.add_argument("--x-col", help="column index (0-based) or header name of x")
    p.add_argument("--y-col", help="column index (0-based) or header name of y")
    p.add_argument("--period", type=float,
                   help="with --x-col: x = (t mod period)/period - 1/2; "
                        "without: raw-signal mode, x from the sample index")
    p.add_argument("--density", default="uniform",
                   help="'uniform' or a two-column CSV tabulating g on [-1/2, 1/2]")
    p.add_argument("--f1-sign", type=int, choices=[-1, 1],
                   help="direction of the sign-mode update (default: sign of --f1, else +1)")
    p.add_argument("--gamma0", type=float, default=1.0)
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--theta0", type=float, default=0.0)
    p.add_argument("--radius", type=float, default=0.25)
    p.add_argument("--sigma2", type=float, help="noise variance for the curve bands")
    p.add_argument("--seed", type=int, help="accepted for interface symmetry; estimation is deterministic")
    p.add_argument("--jobs", type=int, default=1)
    _add_estimation_flags(p, "sign")

    p = sub.add_parser("oracle", help="print closed-form/quadrature model quantities as CSV")
    p.add_argument("--fn", required=True,
                   choices=["phi", "phi_quad", "Phi", "varphi", "Psi", "xi2", "efficient", "nwvar", "fourier"])
    p.add_argument("--model", default="experiment1", choices=["experiment1", "experiment2"])
    p.add_argument("--theta", type=float)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--p", type=int)
    p.add_argument("--t", type=float)
    p.add_argument("--t-range", help="start:stop:num")
    p.add_argument("--x", type=float)
    p.add_argument("--x-range", help="start:stop:num")
    p.add_argument("--alpha", type=float, default=0.9)
    return parser


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------

def cmd_simulate(args):
    overrides = {
        "seed": args.seed,
        "replicates": args.replicates,
        "mode": args.mode,
        "f1": args.f1,
        "g1": args.g1,
        "alpha": args.alpha,
        "kernel": args.kernel,
        "grid_points": args.grid_points,
        "level": args.level,
    }
    config = sim.load_config(args.config, **{k: v for k, v in overrides.items() if v is not None})
    report = sim.run_experiment(config, jobs=args.jobs)
    report.write(args.output)
    print(f"final_theta_hat={report.final_theta_hat:.6f}"
          + (f" delta_hat={report.delta_hat:.6f}" if report.delta_hat is not None else ""))
    return EXIT_OK


# --------------------------------------------------------------------------
# estimate
# --------------------------------------------------------------------------

def _column(spec, header, default):
    if spec is None:
        return default
    if spec.lstrip("-").isdigit():
        return int(spec)
    if header is None or spec not in header:
        raise ConfigError(f"column {spec!r} not found in header")
    return header.index(spec)


def read_series(path, x_col=None, y_col=None, period=None):
    """Load ``(x, y)`` from a CSV, applying the timestamp/sample-index rule.

    Returns x already mapped to ``[-1/2, 1/2]``.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1) if r and "".join(r).strip()]
    except OSError as exc:
        raise ConfigError(f"input: {exc}") from None
    if not rows:
        raise ConfigError(f"input: {path} is empty")
    header = None
    try:
        [float(v) for v in rows[0][1]]
    except ValueError:
        header = [v.strip() for v in rows[0][1]]
        rows = rows[1:]
    if not rows:
        raise ConfigError(f"input: {path} has no data rows")

    raw_signal = x_col is None and period is not None
    ncols = len(rows[0][1])
    yi = _column(y_col, header, 0 if raw_signal or ncols == 1 else 1)
    xi = None if raw_signal else _column(x_col, header, 0)
    if not raw_signal and ncols < 2 and x_col is None:
        raise ConfigError("input has one column; use --period for raw-signal mode")
    if period is not None and not (period >= 2 if raw_signal else period > 0):
        raise ConfigError(f"period: invalid value {period!r}")

    xs, ys = [], []
    for lineno, row in rows:
        try:
            y = float(row[yi])
            x = float(row[xi]) if xi is not None else float(len(ys))
        except (ValueError, IndexError):
            raise DataError(f"malformed row {lineno}: {row!r}") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise DataError(f"non-finite value in row {lineno}")
        xs.append(x)
        ys.append(y)
    x = np.array(xs)
    if raw_signal:
        p = int(period)
        x = np.mod(np.arange(x.size), p) / p - 0.5
    elif period is not None:
        x = np.mod(x, period) / period - 0.5
    bad = np.flatnonzero(np.abs(x) > 0.5)
    if bad.size:
        raise DataError(f"x={x[bad[0]]!r} outside [-1/2, 1/2] in data row {rows[bad[0]][0]}")
    return x, np.array(ys)


def _density(choice):
    if choice == "uniform":
        return mdl.UniformDensity()
    try:
        table = mdl.load_table(choice)
    except OSError as exc:
        raise ConfigError(f"density: {exc}") from None
    return mdl.TabulatedDensity(*table).validate()


def cmd_estimate(args):
    g = _density(args.density)
    mode = sim.MODE_ALIASES[args.mode]
    f1_sign = args.f1_sign
    if f1_sign is None:
        f1_sign = -1 if args.f1 is not None and args.f1 < 0 else 1
    try:
        config = rm.RMConfig(mode=mode, f1_sign=f1_sign, f1=args.f1, g1=args.g1,
                             gamma0=args.gamma0, a=args.a, projection_radius=args.radius,
                             theta0=args.theta0)
        settings = sim.NWSettings(
            grid_points=args.grid_points or 101,
            kernel=args.kernel or "uniform",
            alpha=0.9 if args.alpha is None else args.alpha,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    level = 0.95 if args.level is None else args.level
    if not 0 < level < 1:
        raise ConfigError(f"level: must lie in (0, 1), got {level!r}")
    if args.sigma2 is not None and not args.sigma2 >= 0:
        raise ConfigError(f"sigma2: must be non-negative, got {args.sigma2!r}")

    x, y = read_series(args.input, args.x_col, args.y_col, args.period)
    gx = g(x)
    state, path = rm.run(config, x, y, gx)
    kernel = nw.get_kernel(settings.kernel)
    nw_state = nw.NWState.empty(nw.symmetric_grid(settings.grid_points), settings.alpha)
    prev = np.concatenate([[config.theta0], path[:-1]])
    nw_state = nw.update_batch(nw_state, kernel, x, y, prev)

    diagnostics = {"n": state.n, "f1_hat": state.f1_hat}
    try:
        var_hat = rm.variance_estimate(state, config)
        ci = rm.confidence_interval(state, var_hat, level)
    except RMShiftError as exc:
        ci = None
        diagnostics["plug_in_variance_error"] = str(exc)
    if args.sigma2 is None:
        f_hat = nw.curve(nw_state)
        nan = np.full_like(f_hat, np.nan)
        band = nw.CurveBand(nw_state.grid, f_hat, nan, nan, nan, level)
    else:
        plug_in = SimpleNamespace(g=g, sigma2=args.sigma2, theta=state.theta_hat)
        band = sim.curve_band(nw_state, plug_in, state.theta_hat, level, kernel)

    idx = sim.thin_indices(path.size)
    report = sim.RunReport(
        scenario={
            "name": "estimate",
            "input": str(args.input),
            "mode": mode,
            "density": g.description,
            "rm": asdict(config),
            "nw": {"grid_points": settings.grid_points, "kernel": settings.kernel,
                   "alpha": settings.alpha},
            "level": level,
        },
        final_theta_hat=state.theta_hat,
        ci=ci,
        ci_known=None,
        state=state,
        theta_hat_trace=(idx, path[idx - 1]),
        projection_count=state.projection_count,
        curve=band,
        diagnostics=diagnostics,
    )
    report.write(args.output)
    print(f"final_theta_hat={state.theta_hat:.6f} n={state.n}")
    return EXIT_OK


# --------------------------------------------------------------------------
# oracle
# --------------------------------------------------------------------------

def _grid(single, spec, name, default=None):
    if single is not None and spec is not None:
        raise ConfigError(f"--{name} and --{name}-range are exclusive")
    if single is not None:
        return np.array([single])
    if spec is None:
        if default is None:
            raise ConfigError(f"--{name} or --{name}-range is required")
        return np.array([default])
    try:
        start, stop, num = spec.split(":")
        start, stop, num = float(start), float(stop), int(num)
    except ValueError:
        raise ConfigError(f"--{name}-range: expected start:stop:num, got {spec!r}") from None
    if num < 1 or not (math.isfinite(start) and math.isfinite(stop)) or stop < start:
        raise ConfigError(f"--{name}-range: invalid range {spec!r}")
    return np.linspace(start, stop, num)


def cmd_oracle(args):
    kwargs = {k: v for k, v in (("theta", args.theta), ("sigma2", args.sigma2)) if v is not None}
    if args.model == "experiment1":
        spec = mdl.experiment1(p=args.p or 8, **kwargs)
    else:
        spec = mdl.experiment2(**kwargs)
    out = csv.writer(sys.stdout, lineterminator="\n")
    fn = args.fn
    if fn in ("xi2", "efficient", "fourier"):
        out.writerow(["fn", "value"])
        if fn == "xi2":
            out.writerow(["xi2", repr(mdl.xi_squared(spec))])
        elif fn == "efficient":
            out.writerow(["efficient", repr(mdl.efficient_variance(spec))])
        else:
            out.writerow(["f1", repr(spec.f1)])
            out.writerow(["g1", repr(spec.g1)])
        return EXIT_OK
    if fn == "nwvar":
        xs = _grid(args.x, args.x_range, "x")
        if not 1 / 3 < args.alpha < 1:
            raise ConfigError(f"--alpha: must lie in (1/3, 1), got {args.alpha!r}")
        rows = [(float(x), mdl.nw_asymptotic_variance(spec, float(x), args.alpha)) for x in xs]
        out.writerow(["x", "nwvar"])
        out.writerows((repr(x), repr(v)) for x, v in rows)
        return EXIT_OK
    ts = _grid(args.t, args.t_range, "t")
    funcs = {
        "phi": lambda t: float(mdl.phi_closed(spec, t)),
        "phi_quad": lambda t: mdl.phi_quadrature(spec, t),
        "Phi": lambda t: float(mdl.Phi_closed(spec, t)),
        "varphi": lambda t: mdl.varphi_quadrature(spec, t),
        "Psi": lambda t: mdl.Psi_quadrature(spec, t),
    }
    rows = [(float(t), funcs[fn](float(t))) for t in ts]
    out.writerow(["t", fn])
    out.writerows((repr(t), repr(v)) for t, v in rows)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "oracle": cmd_oracle}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"rmshift {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RMShiftError, ArithmeticError, OSError) as exc:
        print(f"rmshift {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
