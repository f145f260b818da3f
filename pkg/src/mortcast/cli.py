"""Command line interface: fit, forecast, backtest, synth.

Exit codes are a stable contract: 0 success, 1 usage error, 2 fit did not
converge within k_max sweeps, 3 data or domain error. Every artifact file
starts with a comment header holding the resolved configuration and a
SHA-256 digest of the input, so identical inputs rerun to byte-identical
artifacts.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import sys
from pathlib import Path

import numpy as np

from .benchmark_models import CbdParams, LcParams, cbd_forecast, fit_cbd, fit_lc, lc_forecast
from .errors import MortcastError, ParseError
from .evaluation import BacktestConfig, run_backtest
from .ingest import (
    SynthConfig,
    export_csv,
    export_mi_csv,
    generate_manifold,
    generate_synthetic,
    parse_hmd,
    write_hmd,
)
from .lifetable import (
    AgeRange,
    MortalitySurface,
    SurfaceKind,
    YearRange,
    central_rate_to_q,
    surface_q_to_survival,
)
from .sl_model import FitConfig, SlParams, fit_sl, sl_forecast
from .timeseries import calibrate_rwd
from .transforms import build_l_diff

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_CONVERGENCE = 2
EXIT_DATA = 3

_SEX_COLUMN = {"f": "female", "m": "male", "total": "total"}


class _UsageError(MortcastError):
    """A flag value failed a module precondition before any computation."""


def _checked(ctor, *args, **kwargs):
    try:
        return ctor(*args, **kwargs)
    except MortcastError as exc:
        raise _UsageError(str(exc)) from None


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; 2 is reserved for non-convergence."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_window_flags(p):
    p.add_argument("--x-min", type=int, required=True, help="youngest age of the window")
    p.add_argument("--x-max", type=int, required=True, help="oldest age of the window")


def _add_data_flags(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--input", help="HMD 1x1 table to read")
    g.add_argument(
        "--synth",
        choices=["gompertz", "lc", "cbd", "sl"],
        help="generate data on the named manifold instead of reading a file",
    )
    p.add_argument("--sex", choices=sorted(_SEX_COLUMN), default="total")
    p.add_argument("--noise-sd", type=float, default=0.0, help="gompertz generator noise")
    p.add_argument("--seed", type=int, default=0)


def _add_fit_knobs(p):
    p.add_argument("--gamma", type=float, default=0.5, help="damping factor in (0,2)")
    p.add_argument("--epsilon", type=float, default=1e-8, help="per-parameter stop threshold")
    p.add_argument("--k-max", type=int, default=5000, help="sweep budget")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mortcast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit one model and write its parameters")
    fit.add_argument("--config", help="flat key = value file; flags override it")
    fit.add_argument("--model", choices=["sl", "lc", "cbd"], required=True)
    _add_data_flags(fit)
    _add_window_flags(fit)
    fit.add_argument("--t-min", type=int, required=True, help="first fit year")
    fit.add_argument("--t-max", type=int, required=True, help="last fit year")
    fit.add_argument("--t0", type=int, default=None, help="reference year (sl), default t-min - 1")
    _add_fit_knobs(fit)
    fit.add_argument("--out", required=True, help="artifact directory")

    fc = sub.add_parser("forecast", help="project a fitted model forward")
    fc.add_argument("--config", help="flat key = value file; flags override it")
    fc.add_argument("--params", required=True, help="params.csv written by fit")
    fc.add_argument("--horizon", type=int, required=True)
    fc.add_argument("--mode", choices=["central", "sample"], default="central")
    fc.add_argument("--paths", type=int, default=1000)
    fc.add_argument("--seed", type=int, default=0)
    fc.add_argument("--out", required=True)

    bt = sub.add_parser("backtest", help="fit/holdout scoring of the models")
    bt.add_argument("--config", help="flat key = value file; flags override it")
    _add_data_flags(bt)
    _add_window_flags(bt)
    bt.add_argument("--fit-from", type=int, default=1960)
    bt.add_argument("--fit-to", type=int, default=1989)
    bt.add_argument("--forecast-from", type=int, default=1990)
    bt.add_argument("--forecast-to", type=int, default=2009)
    bt.add_argument("--t0", type=int, default=None, help="reference year, default fit-from - 1")
    bt.add_argument("--models", default="sl,lc,cbd", help="comma list from sl,lc,cbd")
    bt.add_argument("--mi-age", type=int, default=65)
    bt.add_argument("--mi-ref-year", type=int, default=None, help="default: last fit year")
    bt.add_argument("--mape-denominator", choices=["estimate", "observed"], default="estimate")
    bt.add_argument("--country", default="", help="label for the report rows")
    _add_fit_knobs(bt)
    bt.add_argument("--out", required=True)

    sy = sub.add_parser("synth", help="write a synthetic surface as an HMD-format file")
    sy.add_argument("--config", help="flat key = value file; flags override it")
    sy.add_argument("--manifold", choices=["gompertz", "lc", "cbd", "sl"], default="gompertz")
    _add_window_flags(sy)
    sy.add_argument("--t-min", type=int, required=True)
    sy.add_argument("--t-max", type=int, required=True)
    sy.add_argument("--gompertz-a", type=float, default=0.005)
    sy.add_argument("--gompertz-b", type=float, default=0.09)
    sy.add_argument("--improvement", type=float, default=-0.01)
    sy.add_argument("--noise-sd", type=float, default=0.0)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--out", required=True, help="output file path")

    return parser


def _load_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"line {line_no}: expected key = value, got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _inject_config(argv: list[str]) -> list[str]:
    """Expand --config FILE into leading flags so explicit flags override."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        return argv  # let argparse report the missing value
    injected: list[str] = []
    for key, value in _load_config_file(argv[i + 1]).items():
        injected += [f"--{key.replace('_', '-')}", value]
    return argv[:1] + injected + argv[1:]


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _surface_bytes(surface: MortalitySurface) -> bytes:
    buf = io.StringIO()
    export_csv(surface, buf)
    return buf.getvalue().encode()


def _load_rates(args, ages: AgeRange, years: YearRange) -> tuple[MortalitySurface, str]:
    """Rate surface over the requested window plus its content digest."""
    if args.input is not None:
        raw = Path(args.input).read_bytes()
        surface = parse_hmd(io.StringIO(raw.decode("utf-8")), _SEX_COLUMN[args.sex], ages, years)
        return surface, _digest(raw)
    if args.synth == "gompertz":
        config = _checked(
            SynthConfig, ages=ages, years=years, noise_sd=args.noise_sd, seed=args.seed
        )
        surface = generate_synthetic(config)
    else:
        surface = generate_manifold(args.synth, ages, years)
    return surface, _digest(_surface_bytes(surface))


def _resolved_header(args, skip=("command",)) -> list[str]:
    lines = []
    for key in sorted(vars(args)):
        if key in skip:
            continue
        lines.append(f"{key} = {getattr(args, key)}")
    return lines


def _write_artifact(path: Path, header: list[str], body: str):
    text = "".join(f"# {line}\n" for line in header) + body
    path.write_text(text, encoding="utf-8")


def _rates_to_q(rates: MortalitySurface) -> MortalitySurface:
    return MortalitySurface(
        ages=rates.ages, years=rates.years, kind=SurfaceKind.DEATH_PROB,
        values=central_rate_to_q(rates.values),
    )


def _params_rows(model: str, params, base_survival=None) -> str:
    out = io.StringIO()
    out.write("param,index,value\n")

    def rows(name, indices, values):
        for idx, v in zip(indices, values):
            out.write(f"{name},{idx},{v:.17g}\n")

    if model == "sl":
        rows("alpha1", params.years, params.alpha1)
        rows("alpha2", params.years, params.alpha2)
        rows("kappa", params.ages, params.kappa)
        rows("base_survival", params.ages, base_survival)
        out.write(f"t0,,{params.t0}\n")
    elif model == "lc":
        rows("alpha_x", params.ages, params.alpha_x)
        rows("beta_x", params.ages, params.beta_x)
        rows("kappa_t", params.years, params.kappa_t)
    else:
        rows("kappa1", params.years, params.kappa1_t)
        rows("kappa2", params.years, params.kappa2_t)
        out.write(f"x_bar,,{params.x_bar:.17g}\n")
    return out.getvalue()


def _read_params(path: str):
    """Rebuild the fitted model written by cmd_fit from its params.csv."""
    meta: dict[str, str] = {}
    series: dict[str, list[tuple[str, float]]] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if line.startswith("#"):
            stripped = line[1:].strip()
            if "=" in stripped:
                key, _, value = stripped.partition("=")
                meta[key.strip()] = value.strip()
            continue
        if not line.strip() or line == "param,index,value":
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ParseError(f"line {line_no}: expected 3 fields, got {len(parts)}")
        try:
            series.setdefault(parts[0], []).append((parts[1], float(parts[2])))
        except ValueError:
            raise ParseError(f"line {line_no}: unparseable value {parts[2]!r}") from None
    if "model" not in meta:
        raise ParseError("params file carries no '# model =' header")
    model = meta["model"]

    def vec(name):
        if name not in series:
            raise ParseError(f"params file missing {name} rows")
        return np.array([v for _, v in series[name]])

    def year_range(name):
        idx = [int(i) for i, _ in series[name]]
        return YearRange(min(idx), max(idx))

    def age_range(name):
        idx = [int(i) for i, _ in series[name]]
        return AgeRange(min(idx), max(idx))

    if model == "sl":
        params = SlParams(
            alpha1=vec("alpha1"),
            alpha2=vec("alpha2"),
            kappa=vec("kappa"),
            t0=int(series["t0"][0][1]),
            ages=age_range("kappa"),
            years=year_range("alpha1"),
        )
        return model, params, vec("base_survival")
    if model == "lc":
        params = LcParams(
            alpha_x=vec("alpha_x"),
            beta_x=vec("beta_x"),
            kappa_t=vec("kappa_t"),
            ages=age_range("alpha_x"),
            years=year_range("kappa_t"),
        )
        return model, params, None
    if model == "cbd":
        if "x_min" not in meta or "x_max" not in meta:
            raise ParseError("params file carries no age window in its header")
        params = CbdParams(
            kappa1_t=vec("kappa1"),
            kappa2_t=vec("kappa2"),
            x_bar=series["x_bar"][0][1],
            ages=AgeRange(int(meta["x_min"]), int(meta["x_max"])),
            years=year_range("kappa1"),
        )
        return model, params, None
    raise ParseError(f"unknown model {model!r} in params file")


def cmd_fit(args) -> int:
    if args.t0 is None:
        args.t0 = args.t_min - 1
    ages = _checked(AgeRange, args.x_min, args.x_max)
    fit_years = _checked(YearRange, args.t_min, args.t_max)
    config = _checked(FitConfig, gamma=args.gamma, epsilon=args.epsilon, k_max=args.k_max)
    if args.model == "sl":
        span = _checked(YearRange, args.t0, args.t_max)
        if args.t0 >= args.t_min:
            raise _UsageError(f"t0 {args.t0} must precede the fit window")
    else:
        span = fit_years

    rates, digest = _load_rates(args, ages, span)
    header = _resolved_header(args) + [f"input_sha256 = {digest}"]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    converged = True
    if args.model == "sl":
        delta = build_l_diff(
            surface_q_to_survival(_rates_to_q(rates)), t0=args.t0, fit_years=fit_years
        )
        params, diag = fit_sl(delta, config)
        converged = diag.converged
        body = _params_rows("sl", params, base_survival=delta.base_survival)
        diag_body = "sweep,objective\n" + "".join(
            f"{k},{v:.17g}\n" for k, v in enumerate(diag.objective_trace)
        )
        diag_header = header + [
            f"iterations = {diag.iterations}",
            f"converged = {diag.converged}",
            f"max_param_delta = {diag.max_param_delta:.17g}",
        ]
        _write_artifact(out_dir / "diagnostics.csv", diag_header, diag_body)
    elif args.model == "lc":
        params = fit_lc(rates)
        body = _params_rows("lc", params)
    else:
        params = fit_cbd(_rates_to_q(rates))
        body = _params_rows("cbd", params)

    _write_artifact(out_dir / "params.csv", header, body)
    _write_artifact(
        out_dir / "config.txt", ["resolved configuration"],
        "".join(f"{line}\n" for line in header),
    )
    print(f"wrote {out_dir / 'params.csv'}")
    if not converged:
        print("fit did not converge within k_max sweeps", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_forecast(args) -> int:
    if args.horizon < 1:
        raise _UsageError(f"horizon must be positive, got {args.horizon}")
    if args.mode == "sample" and args.paths < 1:
        raise _UsageError(f"paths must be positive, got {args.paths}")
    model, params, base_survival = _read_params(args.params)
    raw = Path(args.params).read_bytes()
    header = _resolved_header(args) + [f"input_sha256 = {_digest(raw)}", f"model = {model}"]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if model == "sl":
        rwd = calibrate_rwd(
            np.column_stack([params.alpha1, params.alpha2]), params.years.to_array()
        )

        def forecast(mode, n, s):
            return sl_forecast(params, rwd, base_survival, args.horizon, mode, n_paths=n, seed=s)

    elif model == "lc":
        rwd = calibrate_rwd(params.kappa_t, params.years.to_array())

        def forecast(mode, n, s):
            return lc_forecast(params, rwd, args.horizon, mode, n_paths=n, seed=s)

    else:
        rwd = calibrate_rwd(
            np.column_stack([params.kappa1_t, params.kappa2_t]), params.years.to_array()
        )

        def forecast(mode, n, s):
            return cbd_forecast(params, rwd, args.horizon, mode, n_paths=n, seed=s)

    if args.mode == "central":
        surface = forecast("central", None, None)
        buf = io.StringIO()
        export_csv(surface, buf)
        _write_artifact(out_dir / "forecast.csv", header, buf.getvalue())
        print(f"wrote {out_dir / 'forecast.csv'}")
    else:
        surfaces = forecast("sample", args.paths, args.seed)
        stack = np.stack([s.values for s in surfaces])
        lo, mid, hi = np.quantile(stack, [0.05, 0.5, 0.95], axis=0)
        first = surfaces[0]
        body = io.StringIO()
        body.write("age,year,q05,q50,q95\n")
        for i, x in enumerate(first.ages):
            for j, t in enumerate(first.years):
                body.write(f"{x},{t},{lo[i, j]:.17g},{mid[i, j]:.17g},{hi[i, j]:.17g}\n")
        _write_artifact(out_dir / "quantiles.csv", header, body.getvalue())
        print(f"wrote {out_dir / 'quantiles.csv'}")
    return EXIT_OK


def cmd_backtest(args) -> int:
    if args.t0 is None:
        args.t0 = args.fit_from - 1
    models = tuple(m.strip().upper() for m in args.models.split(",") if m.strip())
    config = _checked(
        BacktestConfig,
        ages=_checked(AgeRange, args.x_min, args.x_max),
        fit_years=_checked(YearRange, args.fit_from, args.fit_to),
        forecast_years=_checked(YearRange, args.forecast_from, args.forecast_to),
        t0=args.t0,
        models=models,
        mape_denominator=args.mape_denominator,
        mi_age=args.mi_age,
        mi_ref_year=args.mi_ref_year,
        fit=_checked(FitConfig, gamma=args.gamma, epsilon=args.epsilon, k_max=args.k_max),
    )
    span = _checked(YearRange, args.t0, args.forecast_to)
    rates, digest = _load_rates(args, config.ages, span)
    header = _resolved_header(args) + [f"input_sha256 = {digest}"]

    report = run_backtest(rates, config, country=args.country, sex=args.sex)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    export_csv(report, buf)
    _write_artifact(out_dir / "report.csv", header, buf.getvalue())
    print(f"wrote {out_dir / 'report.csv'}")
    if report.mi_observed is not None:
        buf = io.StringIO()
        export_mi_csv(report, buf)
        _write_artifact(out_dir / "mi_rates.csv", header, buf.getvalue())
        print(f"wrote {out_dir / 'mi_rates.csv'}")
    if report.sl_converged is False:
        print("SL fit did not converge within k_max sweeps", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_synth(args) -> int:
    ages = _checked(AgeRange, args.x_min, args.x_max)
    years = _checked(YearRange, args.t_min, args.t_max)
    if args.manifold == "gompertz":
        config = _checked(
            SynthConfig,
            gompertz_a=args.gompertz_a,
            gompertz_b=args.gompertz_b,
            improvement=args.improvement,
            ages=ages,
            years=years,
            noise_sd=args.noise_sd,
            seed=args.seed,
        )
        surface = generate_synthetic(config)
    else:
        surface = generate_manifold(args.manifold, ages, years)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    title = "synthetic " + args.manifold + "; " + "; ".join(_resolved_header(args))
    write_hmd(surface, out, title=title)
    print(f"wrote {out}")
    return EXIT_OK


_COMMANDS = {
    "fit": cmd_fit,
    "forecast": cmd_forecast,
    "backtest": cmd_backtest,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _inject_config(argv)
    except (OSError, MortcastError) as exc:
        print(f"mortcast: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"mortcast: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MortcastError as exc:
        print(f"mortcast: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"mortcast: i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
