"""Command-line entry point: ``thevenin-id <command> ...``.

Exit codes: 0 ok, 2 parse error, 3 numerical failure, 4 configuration error.
Failures also print a one-line JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import identifiability as ident
from .config import RunConfig, default_config_path, load_config
from .errors import ConfigError, NumericalError, ParseError, SocOutOfRange
from .fileio import load_dataset, read_json, save_dataset, write_csv, write_json
from .model import PARAM_NAMES, CurrentProfile, SimState, ThveninParams, simulate, voltage_constant_current
from .montecarlo import run_study
from .reports import write_accuracy_table, write_lambda_sweep, write_mc_report
from .synthetic import noise_stream
from .workflows import (
    METHODS,
    DischargeDataset,
    extract_rest_points,
    identify,
    validate_lumped_resistance,
    validate_soc_ocv,
    validate_voltage,
)

EXIT_OK, EXIT_PARSE, EXIT_NUMERICAL, EXIT_CONFIG = 0, 2, 3, 4

log = logging.getLogger("thevenin_id")


def _dataset_meta(cfg: RunConfig, noise_variance=None) -> dict:
    e = cfg.experiment
    return dict(
        noise_variance=cfg.noise_variance if noise_variance is None else noise_variance,
        q_c=e.q_c, v_oc_min=e.v_oc_min, v_oc_max=e.v_oc_max, cutoff_voltage=e.cutoff_voltage, soc0=cfg.soc0,
    )


def cmd_simulate(args, cfg: RunConfig) -> None:
    e = cfg.experiment
    if cfg.segments:
        profile = CurrentProfile.from_segments(cfg.segments)
        t_end = cfg.sim_t_end or float(sum(d for _, d in cfg.segments))
    else:
        profile = CurrentProfile.constant(e.current)
        t_end = cfg.sim_t_end or e.duration
    dt = cfg.sim_dt or e.dt
    sim = simulate(cfg.truth, profile, dt, t_end, SimState(soc=cfg.soc0))
    variance = cfg.noise_variance if args.noise_variance is None else args.noise_variance
    seed = cfg.seed if args.seed is None else args.seed
    v = sim.v + noise_stream(seed, 0, sim.t.size, variance)
    save_dataset(args.out, DischargeDataset(sim.t, sim.current, v, **_dataset_meta(cfg, variance)))
    print(f"wrote {args.out} ({sim.t.size} samples)")


def cmd_identify(args, cfg: RunConfig) -> None:
    data = load_dataset(args.data, **_dataset_meta(cfg, args.noise_variance))
    out = Path(args.out_dir)
    for method in args.method:
        report = identify(data, cfg.prior, method, cfg.solver)
        rec = report.to_json()
        rec["method"] = method
        write_json(out / f"report_{method}.json", rec)
        params = data.params_like(report.theta_hat)
        fitted = voltage_constant_current(params, data.current, data.times - data.times[0])
        write_csv(out / f"fit_{method}.csv", ("t_s", "measured_v", "fitted_v", "residual_v"),
                  zip(data.times, data.voltages, fitted, data.voltages - fitted))
        print(f"{method}: cost={report.cost:.6g} iterations={report.iterations} "
              f"({report.termination_reason}) theta={np.array2string(report.theta_hat, precision=4)}")


def cmd_identifiability(args, cfg: RunConfig) -> None:
    e = cfg.experiment
    s = ident.sensitivity(cfg.truth, e.times, e.current)
    rank = ident.rank_check(s)
    out = Path(args.out_dir)
    write_json(out / "rank.json", {
        "rank": rank.rank,
        "n_samples": int(s.s.shape[0]),
        "condition_number": rank.condition_number,
        "smallest_singular_value": rank.smallest_singular_value,
        "singular_values": [float(x) for x in rank.singular_values],
    })
    reports = {"cnls": ident.theoretical_accuracy_cnls(s, cfg.noise_variance)}
    reports["rnls"] = ident.theoretical_accuracy_rnls(s, cfg.noise_variance, cfg.truth,
                                                       cfg.prior.theta0, cfg.prior.p0_diag)
    write_accuracy_table(out / "theoretical_accuracy.csv", reports)
    print(f"rank={rank.rank} of {s.s.shape[1]}, condition number {rank.condition_number:.4g}")


def cmd_montecarlo(args, cfg: RunConfig) -> None:
    mc = cfg.mc_config(runs=args.runs, seed=args.seed, methods=args.method, workers=args.workers)
    report = run_study(mc)
    write_mc_report(report, args.out_dir)
    for m, s in report.methods.items():
        print(f"{m}: max NRMSE {np.max(s.nrmse):.4g}, mean time {1e3 * s.mean_wall_time:.2f} ms, "
              f"{len(s.failures)} failed")


def cmd_lambda_sweep(args, cfg: RunConfig) -> None:
    e = cfg.experiment
    s = ident.sensitivity(cfg.truth, e.times, e.current)
    lambdas = args.lambdas or cfg.lambdas
    reports = ident.lambda_sweep(s, cfg.noise_variance, cfg.truth, cfg.prior.theta0, cfg.prior.p0_diag, lambdas)
    write_lambda_sweep(args.out, reports)
    print(f"wrote {args.out} ({len(reports)} points)")


def _load_params(args, cfg: RunConfig) -> ThveninParams:
    e = cfg.experiment
    if args.params is None:
        return cfg.truth
    rec = read_json(args.params)
    theta = rec.get("theta_hat") if isinstance(rec, dict) else None
    if theta is None or len(theta) != len(PARAM_NAMES):
        raise ConfigError(f"{args.params}: expected a 'theta_hat' array of {len(PARAM_NAMES)} numbers")
    return ThveninParams.from_vector(theta, e.q_c, e.v_oc_min, e.v_oc_max)


def cmd_validate(args, cfg: RunConfig) -> None:
    params = _load_params(args, cfg)
    meta = _dataset_meta(cfg)
    if args.soc0 is not None:
        meta["soc0"] = args.soc0
    data = load_dataset(args.data, **meta)
    out = Path(args.out_dir)
    summary = {}
    if args.kind in ("voltage", "all"):
        rep = validate_voltage(params, data)
        write_csv(out / "voltage_validation.csv", ("t_s", "soc", "measured_v", "predicted_v", "error_v"),
                  zip(rep.times, rep.soc, rep.measured, rep.predicted, rep.errors))
        summary["voltage"] = {"rms_v": rep.rms_voltage_error, "max_abs_v": rep.max_abs_error,
                              "fraction_below_20mv": rep.fraction_within(0.02)}
    if args.kind in ("ocv", "resistance", "all"):
        pts = extract_rest_points(data, cfg.min_rest, cfg.rest_threshold)
        if not pts:
            raise ConfigError(f"{args.data}: no rest windows of at least {cfg.min_rest} s found")
        soc = [p.soc for p in pts]
        if args.kind in ("ocv", "all"):
            rep = validate_soc_ocv(params, soc, [p.rest_voltage for p in pts])
            write_csv(out / "ocv_validation.csv", ("soc", "measured_ocv_v", "model_ocv_v", "error_v"),
                      zip(rep.soc, rep.measured, rep.predicted, rep.errors))
            summary["ocv"] = {"rms_v": rep.rms_voltage_error, "max_abs_v": rep.max_abs_error, "points": len(pts)}
        if args.kind in ("resistance", "all"):
            rep = validate_lumped_resistance(params, soc, [p.recovery for p in pts], [p.current for p in pts])
            write_csv(out / "resistance_validation.csv", ("soc", "measured_ohm", "model_ohm", "error_ohm"),
                      zip(rep.soc, rep.measured, rep.predicted, rep.errors))
            summary["resistance"] = {"rms_ohm": rep.rms_voltage_error, "max_abs_ohm": rep.max_abs_error,
                                     "points": len(pts)}
    write_json(out / "validation_summary.json", summary)
    print(json.dumps(summary, sort_keys=True))


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thevenin-id", description="Parameter identification for the one-RC Thevenin battery model.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, default=None,
                       help="TOML run configuration (default: bundled simulation setting)")
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, "write an IV log from the configured model and profile")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-variance", type=float)

    p = add("identify", cmd_identify, "estimate parameters from a constant-current IV log")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--method", choices=METHODS, action="append")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--noise-variance", type=float)

    p = add("identifiability", cmd_identifiability, "rank test and theoretical accuracy")
    p.add_argument("--out-dir", type=Path, required=True)

    p = add("montecarlo", cmd_montecarlo, "repeated identification on synthetic data")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--method", choices=METHODS, action="append")

    p = add("lambda-sweep", cmd_lambda_sweep, "theoretical accuracy of the regularized estimator vs prior scale")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--lambdas", type=_float_list, help="comma-separated positive values")

    p = add("validate", cmd_validate, "compare a model against validation data")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--params", type=Path, help="identify report JSON (default: configured truth)")
    p.add_argument("--kind", choices=("voltage", "ocv", "resistance", "all"), default="voltage")
    p.add_argument("--soc0", type=float, help="SoC at the first sample (default 1, or simulate.soc0)")
    p.add_argument("--out-dir", type=Path, required=True)
    return parser


def _fail(code, exc) -> int:
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(record), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "method", None) is None and args.command == "identify":
        args.method = ["cnls"]
    try:
        for attr in ("data", "params", "config"):
            path = getattr(args, attr, None)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{attr} file not found: {path}")
        cfg = load_config(args.config or default_config_path())
        with warnings.catch_warnings():
            warnings.simplefilter("always", SocOutOfRange)
            args.func(args, cfg)
    except ParseError as exc:
        return _fail(EXIT_PARSE, exc)
    except NumericalError as exc:
        return _fail(EXIT_NUMERICAL, exc)
    except (ConfigError, ValueError) as exc:
        return _fail(EXIT_CONFIG, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
