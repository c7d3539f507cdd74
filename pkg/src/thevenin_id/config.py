"""TOML run configuration.

Every section and key is checked against a fixed schema, so a misspelt bound
name fails loudly instead of being ignored. Parameter vectors are written as
tables keyed by parameter name; a missing bound means unbounded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .model import N_PARAMS, PARAM_NAMES, ThveninParams, nominal_params
from .montecarlo import Experiment, McConfig
from .solver import TrustRegionConfig
from .workflows import DEFAULT_NOISE_VARIANCE, METHODS, PriorSpec

_SCHEMA = {
    "experiment": {"current", "duration", "dt", "q_c", "v_oc_min", "v_oc_max", "cutoff_voltage", "noise_variance"},
    "truth": set(PARAM_NAMES),
    "initial_guess": set(PARAM_NAMES),
    "cnls": {"lower", "upper"},
    "rnls": {"theta0", "p0_diag"},
    "solver": {"delta0", "delta_max", "eta_accept", "shrink", "grow", "gtol", "xtol", "ftol", "max_iter"},
    "montecarlo": {"runs", "seed", "methods", "workers"},
    "lambda_sweep": {"lambdas"},
    "simulate": {"segments", "dt", "t_end", "soc0", "seed"},
    "validate": {"min_rest", "rest_threshold"},
}
_VECTOR_TABLES = {("cnls", "lower"), ("cnls", "upper"), ("rnls", "theta0"), ("rnls", "p0_diag")}


@dataclass
class RunConfig:
    experiment: Experiment = field(default_factory=Experiment)
    noise_variance: float = DEFAULT_NOISE_VARIANCE
    truth: ThveninParams = field(default_factory=nominal_params)
    prior: PriorSpec = field(default_factory=PriorSpec.coarse)
    solver: TrustRegionConfig = field(default_factory=TrustRegionConfig)
    runs: int = 100
    seed: int = 0
    methods: tuple = METHODS
    workers: int = 1
    lambdas: tuple = (0.001, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0)
    segments: tuple | None = None
    sim_dt: float | None = None
    sim_t_end: float | None = None
    soc0: float = 1.0
    min_rest: float = 3600.0
    rest_threshold: float = 1e-3

    def mc_config(self, runs=None, seed=None, methods=None, workers=None) -> McConfig:
        return McConfig(
            runs=self.runs if runs is None else runs,
            seed=self.seed if seed is None else seed,
            true_theta=tuple(self.truth.vector()),
            experiment=self.experiment,
            noise_variance=self.noise_variance,
            methods=tuple(self.methods if methods is None else methods),
            prior=self.prior,
            solver=self.solver,
            workers=self.workers if workers is None else workers,
        )


def _check_keys(where, got, allowed):
    unknown = set(got) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")


def _number(where, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    return float(value)


def _vector(where, table, default):
    if not isinstance(table, dict):
        raise ConfigError(f"[{where}] must be a table keyed by parameter name")
    _check_keys(where, table, PARAM_NAMES)
    out = np.array(default, dtype=float)
    for i, name in enumerate(PARAM_NAMES):
        if name in table:
            out[i] = _number(f"{where}.{name}", table[name])
    return out


def parse_config(data: dict) -> RunConfig:
    _check_keys("top level", data, _SCHEMA)
    for section, body in data.items():
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        _check_keys(section, body, _SCHEMA[section])
    cfg = RunConfig()

    exp = dict(data.get("experiment", {}))
    if "noise_variance" in exp:
        cfg.noise_variance = _number("experiment.noise_variance", exp.pop("noise_variance"))
        if cfg.noise_variance < 0:
            raise ConfigError("experiment.noise_variance must be non-negative")
    cfg.experiment = Experiment(**{k: _number(f"experiment.{k}", v) for k, v in exp.items()})
    e = cfg.experiment
    if e.dt <= 0 or e.duration <= 0 or e.q_c <= 0:
        raise ConfigError("experiment dt, duration and q_c must be positive")

    inf = np.full(N_PARAMS, np.inf)
    coarse = PriorSpec.coarse()
    truth = _vector("truth", data.get("truth", {}), nominal_params().vector())
    cfg.truth = ThveninParams.from_vector(truth, e.q_c, e.v_oc_min, e.v_oc_max)

    guess = _vector("initial_guess", data.get("initial_guess", {}), coarse.initial_guess)
    cn = data.get("cnls", {})
    lower = _vector("cnls.lower", cn["lower"], -inf) if "lower" in cn else coarse.lower
    upper = _vector("cnls.upper", cn["upper"], inf) if "upper" in cn else coarse.upper
    rn = data.get("rnls", {})
    theta0 = _vector("rnls.theta0", rn["theta0"], guess) if "theta0" in rn else coarse.theta0
    p0 = _vector("rnls.p0_diag", rn["p0_diag"], coarse.p0_diag) if "p0_diag" in rn else coarse.p0_diag
    cfg.prior = PriorSpec(guess, lower, upper, theta0, p0)

    solver = data.get("solver", {})
    kwargs = {k: (int(v) if k == "max_iter" else _number(f"solver.{k}", v)) for k, v in solver.items()}
    cfg.solver = TrustRegionConfig(**kwargs)

    mc = data.get("montecarlo", {})
    cfg.runs = int(mc.get("runs", cfg.runs))
    cfg.seed = int(mc.get("seed", cfg.seed))
    cfg.workers = int(mc.get("workers", cfg.workers))
    methods = tuple(mc.get("methods", cfg.methods))
    bad = set(methods) - set(METHODS)
    if bad:
        raise ConfigError(f"unknown method(s) {sorted(bad)}; choose from {METHODS}")
    cfg.methods = methods

    lams = data.get("lambda_sweep", {}).get("lambdas")
    if lams is not None:
        cfg.lambdas = tuple(_number("lambda_sweep.lambdas", x) for x in lams)
        if any(x <= 0 for x in cfg.lambdas):
            raise ConfigError("lambda_sweep.lambdas must be positive")

    sim = data.get("simulate", {})
    if "segments" in sim:
        segs = sim["segments"]
        if not all(isinstance(s, list) and len(s) == 2 for s in segs):
            raise ConfigError("simulate.segments must be a list of [current, duration] pairs")
        cfg.segments = tuple((_number("segment current", a), _number("segment duration", b)) for a, b in segs)
    if "dt" in sim:
        cfg.sim_dt = _number("simulate.dt", sim["dt"])
    if "t_end" in sim:
        cfg.sim_t_end = _number("simulate.t_end", sim["t_end"])
    if "soc0" in sim:
        cfg.soc0 = _number("simulate.soc0", sim["soc0"])
    if "seed" in sim:
        cfg.seed = int(sim["seed"])

    val = data.get("validate", {})
    cfg.min_rest = _number("validate.min_rest", val.get("min_rest", cfg.min_rest))
    cfg.rest_threshold = _number("validate.rest_threshold", val.get("rest_threshold", cfg.rest_threshold))
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data)


def default_config_path() -> Path:
    return Path(__file__).parent / "data" / "default.toml"
