"""
Command-line interface for speedchange
Subcommands: validate, flux, classify, bounds, simulate, gk, modecoupling, report.
Exit codes: 0 success, 1 usage or input error, 2 structural failure, 3 numerical failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import pandas as pd
from pydantic import ValidationError

from speedchange import __version__
from speedchange.bounds import DhatCurve, LambdaGrid, dhat_bounds, gk_exact_torus, lower_bound_dhat, upper_bound_dhat
from speedchange.catalog import describe, resolve_model
from speedchange.config import DEFAULT_LAMBDA0, DEFAULT_LAMBDA_COUNT, DEFAULT_LAMBDA_RATIO, get_settings
from speedchange.dual import classify_regime, flux_derivative, microscopic_flux, symbolic_derivative
from speedchange.errors import InputError, SpeedChangeError
from speedchange.fitting import MIN_POINTS, fit_scaling
from speedchange.model import Configuration, DensityContext, validate_all
from speedchange.modecoupling import ModeCouplingProblem, mode_coupling_zeta
from speedchange.sim import (
    SimConfig,
    estimate_diffusivity,
    estimate_structure_function,
    gk_flux_autocorrelation,
    kmc_evolve,
    laplace_consistency,
    replica_streams,
    write_event_log,
)

from .monitoring import finish_manifest, record_outputs, start_manifest
from .reports import frame_series, write_bundle, write_csv, write_json, write_svg

Outcome = Tuple[int, List[Path]]
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

logger = logging.getLogger(__name__)


class UsageParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors as InputError"""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise InputError(f"{self.prog}: {message}")


def _parse_params(items: Optional[Sequence[str]]) -> Dict[str, Any]:
    params: Dict[str, Any] = {}
    for item in items or []:
        if "=" not in item:
            raise InputError(f"parameter {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            params[key] = json.loads(raw)
        except json.JSONDecodeError:
            params[key] = raw
    return params


def _parse_floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise InputError(f"cannot parse number list {text!r}") from e


def _grid(args: argparse.Namespace) -> LambdaGrid:
    if args.lambda_min is not None:
        return LambdaGrid.spanning(args.lam0, args.lambda_min, args.count)
    return LambdaGrid(lam0=args.lam0, ratio=args.ratio, count=args.count)


def cmd_validate(args: argparse.Namespace, out: Path) -> Outcome:
    model = resolve_model(args.model, _parse_params(args.param))
    reports = validate_all(model)
    for report in reports:
        status = "PASS" if report.passed else "FAIL"
        print(f"{report.condition:<12} {status}")
        for line in report.details:
            print(f"    {line}")
    path = write_json({"model": model.name, "rates": describe(model), "conditions": [r.model_dump(mode="json") for r in reports]}, out / "validation.json")
    return (0 if all(r.passed for r in reports) else 2), [path]


def cmd_flux(args: argparse.Namespace, out: Path) -> Outcome:
    model = resolve_model(args.model, _parse_params(args.param))
    ctx = DensityContext(rho=args.rho)
    bundle = microscopic_flux(model, ctx)
    rows = []
    for axis in range(model.d):
        print(f"j_{axis}(rho) = {bundle.j[axis].as_expr()}")
        for k in (2, 3):
            rows.append({
                "axis": axis,
                "k": k,
                "from_flux": flux_derivative(bundle, k, axis),
                "symbolic": float(symbolic_derivative(bundle.j[axis], k, ctx.rho)),
            })
        print(f"C_{axis}{axis} = {bundle.C[axis]}")
    table = pd.DataFrame(rows, columns=["axis", "k", "from_flux", "symbolic"])
    print(table.to_string(index=False))
    document = {
        "model": model.name,
        "rho": str(ctx.rho),
        "j": [str(j.as_expr()) for j in bundle.j],
        "C": [str(c) for c in bundle.C],
        "w_degrees": [list(f.degree_span) for f in bundle.w],
    }
    return 0, [write_json(document, out / "flux.json"), write_csv(table, out / "flux_derivatives.csv")]


def cmd_classify(args: argparse.Namespace, out: Path) -> Outcome:
    model = resolve_model(args.model, _parse_params(args.param))
    report = classify_regime(model, args.rho, args.axis)
    print(report.summary())
    print(f"expected: D-hat ~ {report.prediction}")
    return 0, [write_json(report, out / "regime.json")]


def cmd_bounds(args: argparse.Namespace, out: Path) -> Outcome:
    model = resolve_model(args.model, _parse_params(args.param))
    ctx = DensityContext(rho=args.rho)
    grid = _grid(args)
    if args.which == "both":
        curve = dhat_bounds(model, ctx, grid, args.axis)
    elif args.which == "upper":
        curve = upper_bound_dhat(microscopic_flux(model, ctx), grid, model, args.axis)
    else:
        curve = lower_bound_dhat(model, ctx, grid, axis=args.axis)
    frame = curve.to_frame()
    print(frame.to_string(index=False))
    paths = [write_csv(frame, out / "dhat_bounds.csv"), write_json(curve, out / "dhat_bounds.json")]
    if args.plot:
        paths.append(write_svg(frame_series(frame, "lambda", ["lower", "upper"]), out / "dhat_bounds.svg",
                               f"D-hat bounds, {model.name}, rho={args.rho}", "lambda", "D-hat"))
    scaling = _scaling_fits(curve)
    if scaling:
        paths.append(write_json(scaling, out / "scaling.json"))
    return 0, paths


def _scaling_fits(curve: DhatCurve) -> Dict[str, Any]:
    """Asymptotic form of each available w-term bound; grids shorter than MIN_POINTS are not fitted"""
    fits: Dict[str, Any] = {}
    for side in ("lower_w", "upper_w"):
        values = getattr(curve, side)
        if values is None or len(values) < MIN_POINTS:
            continue
        try:
            fit = fit_scaling(curve.lambdas, values)
        except InputError as e:
            logger.warning(f"No scaling fit for the {side} curve: {e}")
            continue
        print(f"{side}: {fit.selected}, power-law exponent {fit.exponent:.3f}")
        fits[side] = {**fit.model_dump(), "exponent": fit.exponent, "log_flag": fit.log_flag}
    return fits


def _sim_config(args: argparse.Namespace, mode: str, **extra: Any) -> SimConfig:
    try:
        return SimConfig(
            model=args.model,
            params=_parse_params(args.param),
            L=args.L,
            rho=float(DensityContext(rho=args.rho).rho),
            replicas=args.replicas,
            seed=args.seed,
            mode=mode,
            enforce_finite_size=not args.no_size_guard,
            **extra,
        )
    except ValidationError as e:
        raise InputError(f"invalid simulation parameters: {e}") from e


def cmd_simulate(args: argparse.Namespace, out: Path) -> Outcome:
    times = _parse_floats(args.times)
    config = _sim_config(args, args.mode, t_max=args.t_max or max(times), sample_times=times)
    paths = []
    if config.mode == "second_class":
        curve = estimate_diffusivity(config)
    else:
        structure = estimate_structure_function(config)
        paths.append(write_csv(structure.to_frame(), out / "structure.csv"))
        paths.append(write_csv(structure.moments(), out / "moments.csv"))
        curve = estimate_diffusivity(config, structure)
    frame = curve.to_frame()
    print(frame.to_string(index=False))
    paths.append(write_csv(frame, out / "diffusivity.csv"))
    if args.plot:
        columns = [c for c in frame.columns if c.startswith("D_") and not c.endswith("_se")]
        paths.append(write_svg(frame_series(frame, "t", columns), out / "diffusivity.svg", f"D(t), {args.model}", "t", "D(t)"))
    if args.events:
        model = config.resolve()
        rng, seed = replica_streams(config.base_seed, 1)[0]
        state = Configuration.bernoulli(config.L, model.d, config.rho, rng)
        _, _, log = kmc_evolve(model, state, config.t_max, seed, record=True)
        logger.info(f"Event log: {len(log.records)} events, acceptance {log.acceptance:.3f}")
        paths.append(write_event_log(out / "events.bin", log))
    return 0, paths


def cmd_gk(args: argparse.Namespace, out: Path) -> Outcome:
    lambdas = _parse_floats(args.lambdas)
    if args.exact:
        model = resolve_model(args.model, _parse_params(args.param))
        values = gk_exact_torus(model, args.rho, args.L, lambdas, args.axis)
        frame = pd.DataFrame({"lambda": lambdas, "dhat": values})
    else:
        config = _sim_config(args, "flux_autocorr", t_max=args.t_max, dt=args.dt)
        estimate = gk_flux_autocorrelation(config, lambdas, args.axis)
        frame = estimate.to_frame()
    print(frame.to_string(index=False))
    paths = [write_csv(frame, out / ("gk_exact.csv" if args.exact else "gk.csv"))]
    if args.laplace_times and not args.exact:
        times = _parse_floats(args.laplace_times)
        structure_config = _sim_config(args, "structure_function", t_max=max(times), sample_times=times)
        comparison = laplace_consistency(estimate_diffusivity(structure_config), estimate, args.axis)
        print(comparison.to_string(index=False))
        paths.append(write_csv(comparison, out / "laplace_consistency.csv"))
    return 0, paths


def cmd_modecoupling(args: argparse.Namespace, out: Path) -> Outcome:
    try:
        problem = ModeCouplingProblem(n=args.n, d=args.d, D=args.D, c=args.c, grid=args.grid, t_max=args.t_max, per_decade=args.per_decade)
    except ValidationError as e:
        raise InputError(f"invalid mode-coupling parameters: {e}") from e
    result = mode_coupling_zeta(problem)
    verdict = "logarithmic correction" if result.log_preferred else "no logarithmic correction"
    print(f"n={result.n} d={result.d}: zeta={result.zeta:.3f} (R^2={result.r2:.3f}), {verdict}")
    return 0, [write_json({"problem": problem.model_dump(), "result": result.model_dump()}, out / "modecoupling.json")]


def cmd_report(args: argparse.Namespace, out: Path) -> Outcome:
    source = Path(args.input) if args.input else out
    if not source.is_dir():
        raise InputError(f"report input {source} is not a directory")
    return 0, write_bundle(source, out)


COMMANDS: Dict[str, Callable[[argparse.Namespace, Path], Outcome]] = {
    "validate": cmd_validate,
    "flux": cmd_flux,
    "classify": cmd_classify,
    "bounds": cmd_bounds,
    "simulate": cmd_simulate,
    "gk": cmd_gk,
    "modecoupling": cmd_modecoupling,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = UsageParser(prog="speedchange", description="Speed-change exclusion lattice gas toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--output", "-o", help="Output directory (default: SPEEDCHANGE_OUTPUT or reports/)")
    parser.add_argument("--log-level", help="Logging level (default: SPEEDCHANGE_LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=UsageParser)

    def with_model(p: argparse.ArgumentParser) -> argparse.ArgumentParser:
        p.add_argument("model", help="Builtin model name or path to a JSON model file")
        p.add_argument("--param", action="append", metavar="KEY=VALUE", help="Builtin model parameter (repeatable)")
        return p

    def with_density(p: argparse.ArgumentParser) -> argparse.ArgumentParser:
        p.add_argument("--rho", default="1/2", help="Density, exact when rational (default 1/2)")
        p.add_argument("--axis", type=int, default=0)
        return p

    def with_replicas(p: argparse.ArgumentParser) -> argparse.ArgumentParser:
        p.add_argument("--L", type=int, required=True, help="Box side")
        p.add_argument("--replicas", type=int, default=1)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--no-size-guard", action="store_true", help="Allow L below the finite-size guard")
        return p

    with_model(sub.add_parser("validate", help="Check locality, divergence and coercivity"))
    with_density(with_model(sub.add_parser("flux", help="Macroscopic flux, derivatives and C_ii")))
    with_density(with_model(sub.add_parser("classify", help="Regime and proved bounds")))

    bounds = with_density(with_model(sub.add_parser("bounds", help="Certified bounds on D-hat(lambda)")))
    bounds.add_argument("--lam0", type=float, default=DEFAULT_LAMBDA0)
    bounds.add_argument("--ratio", type=float, default=DEFAULT_LAMBDA_RATIO)
    bounds.add_argument("--count", type=int, default=DEFAULT_LAMBDA_COUNT)
    bounds.add_argument("--lambda-min", type=float, default=None, help="Span lam0 down to this value instead of using --ratio")
    bounds.add_argument("--which", choices=["both", "lower", "upper"], default="both")
    bounds.add_argument("--plot", action="store_true")

    simulate = with_replicas(with_density(with_model(sub.add_parser("simulate", help="Monte Carlo S(x,t) and D(t)"))))
    simulate.add_argument("--times", default="1,10,100", help="Comma-separated sample times")
    simulate.add_argument("--t-max", type=float, default=None)
    simulate.add_argument("--mode", choices=["structure_function", "second_class"], default="structure_function")
    simulate.add_argument("--events", action="store_true", help="Also write a binary event log of one replica")
    simulate.add_argument("--plot", action="store_true")

    gk = with_replicas(with_density(with_model(sub.add_parser("gk", help="Green-Kubo estimate of D-hat(lambda)"))))
    gk.add_argument("--lambdas", default="0.1,0.5,1")
    gk.add_argument("--t-max", type=float, default=200.0)
    gk.add_argument("--dt", type=float, default=0.05)
    gk.add_argument("--exact", action="store_true", help="Exact resolvent on a small torus instead of simulation")
    gk.add_argument("--laplace-times", default=None, help="Also measure D(t) at these times and compare its Laplace transform")

    mc = sub.add_parser("modecoupling", help="Fit the log exponent of the mode-coupling closure")
    mc.add_argument("--n", type=int, default=2)
    mc.add_argument("--d", type=int, default=2)
    mc.add_argument("--D", type=float, default=1.0)
    mc.add_argument("--c", type=float, default=1.0)
    mc.add_argument("--grid", type=int, default=None)
    mc.add_argument("--t-max", type=float, default=1e4)
    mc.add_argument("--per-decade", type=int, default=70)

    report = sub.add_parser("report", help="Bundle prior outputs into JSON and HTML")
    report.add_argument("--input", default=None, help="Directory of prior outputs (default: the output directory)")
    return parser


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code"""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except InputError as e:
        print(str(e), file=sys.stderr)
        return 1
    except SystemExit as e:
        return int(e.code or 0)

    settings = get_settings()
    logging.basicConfig(level=(args.log_level or settings.log_level).upper(), format=LOG_FORMAT)
    out = Path(args.output) if args.output else settings.output_dir
    parameters = {k: v for k, v in vars(args).items() if k not in ("command", "output", "log_level")}
    manifest = start_manifest(args.command, argv, parameters, getattr(args, "model", None))
    logger.info(f"speedchange {__version__}: {args.command}")

    paths: List[Path] = []
    try:
        code, paths = COMMANDS[args.command](args, out)
    except SpeedChangeError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        diagnostics = getattr(e, "diagnostics", None)
        if diagnostics:
            print(f"diagnostics: {json.dumps(diagnostics, default=str)}", file=sys.stderr)
        counterexample = getattr(e, "counterexample", None)
        if counterexample is not None:
            print(f"counterexample: {counterexample}", file=sys.stderr)
        code = e.exit_code
    except (ValidationError, ValueError) as e:
        logger.error(f"{args.command} rejected its input: {e}")
        print(f"error: {e}", file=sys.stderr)
        code = 1

    record_outputs(manifest, paths)
    finish_manifest(manifest, out, code)
    return code


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
