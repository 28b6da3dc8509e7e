"""Command-line entry point: ``fpflab {simulate,filter,cod,gain-sweep,sir-demo}``.

Configuration is a JSON file with the sections ``seed``, ``output_dir``,
``threads``, ``model``, ``filter`` and ``experiment``. Values resolve as
flags > file > defaults; ``FPFLAB_OUTPUT`` replaces the default output
directory. Unknown keys are rejected.
"""

from __future__ import annotations

import argparse
import copy
import inspect
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import numpy as np

from . import experiments, gain, models
from .core import RngStream
from .errors import ConfigError
from .fpf import BACKENDS, FpfConfig, fpf_run

COMMANDS = ("simulate", "filter", "cod", "gain-sweep", "sir-demo")
DEFAULT_OUTPUT = "fpflab_out"

# ---------------------------------------------------------------- validators


def _num(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(key, f"expected a finite number, got {v!r}")
    return v


def positive(key, v):
    if _num(key, v) <= 0:
        raise ConfigError(key, f"must be > 0, got {v}")
    return float(v)


def nonneg(key, v):
    if _num(key, v) < 0:
        raise ConfigError(key, f"must be >= 0, got {v}")
    return float(v)


def real(key, v):
    return float(_num(key, v))


def int_ge(lo):
    def check(key, v):
        if isinstance(v, bool) or not isinstance(v, int) and not (isinstance(v, float) and v.is_integer()):
            raise ConfigError(key, f"expected an integer, got {v!r}")
        if v < lo:
            raise ConfigError(key, f"must be >= {lo}, got {v}")
        return int(v)

    return check


def choice(*options):
    def check(key, v):
        if v not in options:
            raise ConfigError(key, f"must be one of {list(options)}, got {v!r}")
        return v

    return check


def optional(inner):
    def check(key, v):
        return None if v is None else inner(key, v)

    return check


def list_of(inner, min_len=1, ascending=False):
    def check(key, v):
        if not isinstance(v, (list, tuple)) or len(v) < min_len:
            raise ConfigError(key, f"expected a list with at least {min_len} entries")
        out = [inner(f"{key}[{i}]", x) for i, x in enumerate(v)]
        if ascending and out != sorted(out):
            raise ConfigError(key, "must be sorted ascending")
        return out

    return check


def boolean(key, v):
    if not isinstance(v, bool):
        raise ConfigError(key, f"expected true or false, got {v!r}")
    return v


def basis_spec(key, v):
    if v is None or v == "coordinate" or (isinstance(v, str) and v.startswith("poly") and v[4:].isdigit() and int(v[4:]) >= 1):
        return v
    raise ConfigError(key, f"basis must be null, 'coordinate' or 'poly<k>', got {v!r}")


def matrix(key, v):
    try:
        a = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(key, "expected a number or nested list of numbers") from None
    if not np.all(np.isfinite(a)):
        raise ConfigError(key, "entries must be finite")
    return v


# ---------------------------------------------------------------- schema

Field = tuple  # (default, validator)

FILTER_SCHEMA: Dict[str, Field] = {
    "gain_backend": ("constant", choice(*BACKENDS)),
    "dt": (0.01, positive),
    "n_particles": (100, int_ge(2)),
    "epsilon": (None, optional(positive)),
    "basis": (None, basis_spec),
    "scheme": ("euler", choice("euler", "heun")),
    "dm_tol": (gain.DM_TOL, positive),
    "dm_max_iter": (gain.DM_MAX_ITER, int_ge(1)),
    "dm_method": ("iterate", choice("iterate", "solve")),
    "warm_start": (False, boolean),
}

MODEL_PARAM_CHECKS: Dict[str, Callable] = {
    "A": matrix, "H": matrix, "m0": matrix, "cov0": matrix, "sigma_b": matrix,
    "obs_noise": positive, "sigma0": positive, "sigma_w": positive, "var": positive,
    "d": int_ge(1), "alpha": nonneg, "beta_mean": real, "beta_std": nonneg,
}

EXPERIMENT_SCHEMA: Dict[str, Dict[str, Field]] = {
    "simulate": {"horizon": (100, int_ge(1)), "dt": (0.01, positive)},
    "filter": {"horizon": (100, int_ge(1))},
    "cod": {
        "dims": ([1, 2, 3, 4], list_of(int_ge(1))),
        "ns": ([100, 500], list_of(int_ge(10))),
        "trials": (1000, int_ge(100)),
        "sigma0": (1.0, positive),
        "sigma_w": (1.0, positive),
        "dt": (0.01, positive),
    },
    "gain-sweep": {
        "eps": (experiments.default_eps_grid(), list_of(positive, ascending=True)),
        "n": (200, int_ge(2)),
        "trials": (1000, int_ge(1)),
        "var": (0.2, positive),
        "method": ("solve", choice("iterate", "solve")),
    },
    "sir-demo": {
        "beta": (0.1, nonneg),
        "horizon": (100, int_ge(1)),
        "backends": (["constant", "diffusion_map"], list_of(choice("constant", "diffusion_map"))),
    },
}

# Parameter values for the epidemic study: dt = 1, sigma_W = 0.1, sigma_B = 0.1,
# N = 100, alpha = 0.1, beta = 0.1.
SIR_MODEL = {"alpha": 0.1, "sigma_b": 0.1, "sigma_w": 0.1, "beta_mean": 0.15, "beta_std": 0.05}

DEFAULT_MODEL = {
    "simulate": {"name": "linear_gaussian", "params": {"A": [[-0.5]], "H": [1.0], "sigma_b": 1.0, "obs_noise": 0.5}},
    "filter": {"name": "linear_gaussian", "params": {"A": [[-0.5]], "H": [1.0], "sigma_b": 1.0, "obs_noise": 0.5}},
    "sir-demo": {"name": "sir", "params": SIR_MODEL},
}
FILTER_OVERRIDES = {"sir-demo": {"dt": 1.0, "n_particles": 100}}
SECTIONS = {
    "simulate": ("model", "experiment"),
    "filter": ("model", "filter", "experiment"),
    "cod": ("experiment",),
    "gain-sweep": ("experiment",),
    "sir-demo": ("model", "filter", "experiment"),
}
TOP_KEYS = ("command", "seed", "output_dir", "threads", "model", "filter", "experiment")


@dataclass(frozen=True)
class RunConfig:
    command: str
    seed: int
    output_dir: str
    threads: int = 1
    model: Optional[dict] = None
    filter: Optional[dict] = None
    experiment: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"command": self.command, "seed": self.seed, "output_dir": self.output_dir, "threads": self.threads}
        for name in SECTIONS[self.command]:
            out[name] = copy.deepcopy(getattr(self, name))
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def defaults(command: str) -> dict:
    if command not in COMMANDS:
        raise ConfigError("command", f"must be one of {list(COMMANDS)}, got {command!r}")
    out = {"command": command, "seed": 0, "output_dir": os.environ.get("FPFLAB_OUTPUT", DEFAULT_OUTPUT), "threads": 1}
    if "model" in SECTIONS[command]:
        out["model"] = copy.deepcopy(DEFAULT_MODEL[command])
    if "filter" in SECTIONS[command]:
        out["filter"] = {k: d for k, (d, _) in FILTER_SCHEMA.items()}
        out["filter"].update(FILTER_OVERRIDES.get(command, {}))
    out["experiment"] = {k: copy.deepcopy(d) for k, (d, _) in EXPERIMENT_SCHEMA[command].items()}
    return out


def _merge_strict(base: dict, update: dict, command: str) -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if key not in TOP_KEYS or (key in ("model", "filter", "experiment") and key not in SECTIONS[command]):
            raise ConfigError(key, f"unknown key for command {command!r}")
        if key == "command":
            if value != command:
                raise ConfigError("command", f"file is for {value!r}, running {command!r}")
            continue
        if key in ("filter", "experiment"):
            if not isinstance(value, dict):
                raise ConfigError(key, "expected a table")
            schema = FILTER_SCHEMA if key == "filter" else EXPERIMENT_SCHEMA[command]
            for sub, v in value.items():
                if sub not in schema:
                    raise ConfigError(f"{key}.{sub}", "unknown key")
                out[key][sub] = v
        elif key == "model":
            if not isinstance(value, dict) or set(value) - {"name", "params"}:
                raise ConfigError("model", "expected a table with keys 'name' and 'params'")
            if "name" in value and value["name"] != out["model"]["name"]:
                out["model"] = {"name": value["name"], "params": {}}
            out["model"]["params"].update(value.get("params", {}))
        else:
            out[key] = value
    return out


def _validate(raw: dict) -> RunConfig:
    command = raw["command"]
    seed = raw["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed", f"must be an unsigned 64-bit integer, got {seed!r}")
    if not isinstance(raw["output_dir"], str) or not raw["output_dir"]:
        raise ConfigError("output_dir", "must be a non-empty path string")
    threads = int_ge(0)("threads", raw["threads"])
    kw: Dict[str, Any] = {}
    if "model" in raw:
        name = raw["model"]["name"]
        if name not in models.MODELS:
            raise ConfigError("model.name", f"unknown model {name!r}; choose from {sorted(models.MODELS)}")
        if command == "sir-demo" and name != "sir":
            raise ConfigError("model.name", "sir-demo requires the 'sir' model")
        accepted = inspect.signature(models.MODELS[name]).parameters
        params = {}
        for k, v in raw["model"]["params"].items():
            key = f"model.params.{k}"
            if k not in accepted:
                raise ConfigError(key, f"unknown parameter for model {name!r}")
            params[k] = MODEL_PARAM_CHECKS.get(k, matrix)(key, v)
        if name == "linear_gaussian" and not {"A", "H"} <= set(params):
            raise ConfigError("model.params", "linear_gaussian needs A and H")
        kw["model"] = {"name": name, "params": params}
    if "filter" in raw:
        kw["filter"] = {k: FILTER_SCHEMA[k][1](f"filter.{k}", v) for k, v in raw["filter"].items()}
        if kw["filter"]["gain_backend"] == "galerkin" and kw["filter"]["basis"] is None:
            raise ConfigError("filter.basis", "galerkin backend needs a basis")
    schema = EXPERIMENT_SCHEMA[command]
    kw["experiment"] = {k: schema[k][1](f"experiment.{k}", v) for k, v in raw["experiment"].items()}
    cfg = RunConfig(command, seed, raw["output_dir"], threads, **kw)
    _check_model(cfg)
    return cfg


def _check_model(cfg: RunConfig):
    if cfg.model is None:
        return
    try:
        models.make_model(cfg.model["name"], **cfg.model["params"])
    except (ValueError, TypeError) as exc:
        raise ConfigError("model.params", str(exc)) from None


def parse_config(command: str, path=None, overrides: Optional[dict] = None) -> RunConfig:
    """Resolve defaults, then the JSON file at ``path``, then ``overrides``.

    ``overrides`` maps dotted keys (``"filter.n_particles"``) to values.
    """
    raw = defaults(command)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError("config", f"file not found: {p}")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be a table")
        raw = _merge_strict(raw, data, command)
    for dotted, value in (overrides or {}).items():
        raw = _merge_strict(raw, _nest(dotted, value), command)
    return _validate(raw)


def config_from_dict(data: dict) -> RunConfig:
    """Rebuild a RunConfig from :meth:`RunConfig.to_dict` output."""
    if "command" not in data:
        raise ConfigError("command", "missing")
    return _validate(_merge_strict(defaults(data["command"]), data, data["command"]))


def _nest(dotted: str, value) -> dict:
    parts = dotted.split(".")
    if parts[0] == "model" and len(parts) == 3 and parts[1] == "params":
        return {"model": {"params": {parts[2]: value}}}
    if len(parts) == 1:
        return {parts[0]: value}
    if len(parts) == 2:
        return {parts[0]: {parts[1]: value}}
    raise ConfigError(dotted, "unknown key")


# ---------------------------------------------------------------- dispatch


def _basis(spec, d):
    if spec is None:
        return None
    if spec == "coordinate":
        return gain.coordinate_basis(d)
    return gain.polynomial_basis_1d(int(spec[4:]))


def _fpf_config(cfg: RunConfig, d: int) -> FpfConfig:
    f = dict(cfg.filter)
    f["basis"] = _basis(f["basis"], d)
    return FpfConfig(**f)


def _run_simulate(cfg, rng):
    m = models.make_model(cfg.model["name"], **cfg.model["params"])
    e = cfg.experiment
    states, obs = models.simulate_truth(m, e["horizon"], e["dt"], rng)
    cols = ["k", "t"] + [f"x_{j + 1}" for j in range(m.dim)] + ["dZ"]
    report = experiments.ExperimentReport("simulate", cfg.to_dict(), cols, seeds=[cfg.seed])
    dz = list(obs.increments) + [float("nan")]
    for k in range(states.shape[0]):
        report.add(k, k * e["dt"], *states[k], dz[k])
    return report


def _run_filter(cfg, rng):
    m = models.make_model(cfg.model["name"], **cfg.model["params"])
    fc = _fpf_config(cfg, m.dim)
    states, obs = models.simulate_truth(m, cfg.experiment["horizon"], fc.dt, rng.child(0))
    res = fpf_run(m, obs, fc, rng.child(1))
    cols = res.columns() + [f"truth_{j + 1}" for j in range(m.dim)]
    report = experiments.ExperimentReport("filter", cfg.to_dict(), cols, seeds=[cfg.seed])
    for k, row in enumerate(res.rows()):
        report.add(*row, *states[k])
    return report


def _run_cod(cfg, rng):
    e = cfg.experiment
    return experiments.cod_benchmark(e["dims"], e["ns"], e["trials"], rng, e["sigma0"], e["sigma_w"], e["dt"],
                                     threads=cfg.threads)


def _run_gain_sweep(cfg, rng):
    e = cfg.experiment
    return experiments.gain_sweep(e["eps"], e["n"], e["trials"], rng, var=e["var"], method=e["method"],
                                  threads=cfg.threads)


def _run_sir_demo(cfg, rng):
    p, f, e = cfg.model["params"], cfg.filter, cfg.experiment
    sir = {**SIR_MODEL, **p}
    return experiments.sir_demo(
        rng, alpha=sir["alpha"], beta=e["beta"], sigma_w=sir["sigma_w"], sigma_b=sir["sigma_b"],
        n_particles=f["n_particles"], dt=f["dt"], horizon=e["horizon"], backends=tuple(e["backends"]),
        beta_prior_mean=sir["beta_mean"], beta_prior_std=sir["beta_std"], dm_method=f["dm_method"],
        threads=cfg.threads,
    )


DISPATCH = {
    "simulate": ("models", "simulate_truth", _run_simulate),
    "filter": ("fpf", "fpf_run", _run_filter),
    "cod": ("experiments", "cod_benchmark", _run_cod),
    "gain-sweep": ("experiments", "gain_sweep", _run_gain_sweep),
    "sir-demo": ("experiments", "sir_demo", _run_sir_demo),
}


class RunError(Exception):
    def __init__(self, module, operation, exc):
        super().__init__(f"{module}.{operation}: {type(exc).__name__}: {exc}")
        self.record = {
            "status": "error",
            "module": module,
            "operation": operation,
            "error": type(exc).__name__,
            "message": str(exc),
        }
        if isinstance(exc, ConfigError):
            self.record["key"] = exc.key


def run(cfg: RunConfig, timestamp: Optional[str] = None):
    """Execute ``cfg``; return the written artifact paths (CSV first, then JSON)."""
    module, operation, fn = DISPATCH[cfg.command]
    if cfg.command == "filter" and cfg.filter["gain_backend"] == "galerkin" and cfg.filter["basis"] != "coordinate":
        d = models.make_model(cfg.model["name"], **cfg.model["params"]).dim
        if d != 1:
            raise RunError("cli", "parse_config", ConfigError("filter.basis", "polynomial bases need a 1-D model"))
    try:
        report = fn(cfg, RngStream(cfg.seed))
    except Exception as exc:  # surfaced as a structured record
        raise RunError(module, operation, exc) from exc
    return list(report.write(cfg.output_dir, stamp=timestamp, config=cfg.to_dict()))


# ---------------------------------------------------------------- argv

FLAG_ALIASES = {
    "filter": {"n": "filter.n_particles"},
    "sir-demo": {"n": "filter.n_particles"},
}


def _flag_value(default, text):
    if isinstance(default, list):
        kind = type(default[0]) if default else float
        items = [t for t in text.split(",") if t.strip()]
        return [_scalar(kind, t.strip()) for t in items]
    return _scalar(type(default), text)


def _scalar(kind, text):
    if kind is bool:
        if text.lower() not in ("true", "false"):
            raise ConfigError("flag", f"expected true or false, got {text!r}")
        return text.lower() == "true"
    if kind is str:
        return text
    try:
        v = float(text)
    except ValueError:
        if kind is type(None):
            return text
        raise ConfigError("flag", f"expected a number, got {text!r}") from None
    return int(v) if kind is int and v.is_integer() else v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fpflab", description="Filtering experiments with seeded, reproducible output.")
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--output", help="output directory")
        p.add_argument("--threads", type=int, help="worker threads (0 = all cores)")
        p.add_argument("--timestamp", help="fixed file-name stamp instead of the current UTC time")
        p.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                       help="override any dotted key, e.g. model.params.sigma_b=0.2")
        seen = {"config", "seed", "output", "threads", "timestamp", "set"}
        for section in ("experiment", "filter"):
            if section not in SECTIONS[cmd]:
                continue
            schema = EXPERIMENT_SCHEMA[cmd] if section == "experiment" else FILTER_SCHEMA
            for key in schema:
                if key in seen:
                    continue
                seen.add(key)
                p.add_argument(f"--{key.replace('_', '-')}", dest=f"{section}.{key}", metavar=key.upper())
        for alias, target in FLAG_ALIASES.get(cmd, {}).items():
            if alias not in seen:
                p.add_argument(f"--{alias}", dest=target, metavar="N")
    return ap


def _overrides(ns, cmd) -> dict:
    out = {}
    base = defaults(cmd)
    for dest, text in vars(ns).items():
        if "." not in dest or text is None:
            continue
        section, key = dest.split(".")
        out[dest] = _flag_value(base[section][key], text)
    for item in ns.set:
        if "=" not in item:
            raise ConfigError(item, "expected KEY=JSON")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    for flag, key in (("seed", "seed"), ("output", "output_dir"), ("threads", "threads")):
        if getattr(ns, flag) is not None:
            out[key] = getattr(ns, flag)
    return out


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = parse_config(ns.command, ns.config, _overrides(ns, ns.command))
        paths = run(cfg, ns.timestamp)
    except ConfigError as exc:
        rec = {"status": "error", "module": "cli", "operation": "parse_config", "error": "ConfigError",
               "key": exc.key, "message": exc.reason}
        print(json.dumps(rec), file=sys.stderr)
        return 2
    except RunError as exc:
        print(json.dumps(exc.record), file=sys.stderr)
        return 1
    print(json.dumps({"status": "ok", "artifacts": [str(p) for p in paths]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
