"""``rescaled-gp``: prior sampling, small-ball estimates, concentration
estimates, posterior fits and contraction-rate experiments from JSON configs.

Every CSV is written together with ``<name>.csv.json`` holding the command,
the fully resolved configuration and SHA-256 hashes of the outputs.  Passing
that sidecar back as ``--config`` reproduces the CSV byte for byte.

Exit codes: 0 success, 1 computation failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import io
import json
import math
import sys
from pathlib import Path
from typing import Callable

import jsonschema

from . import experiments, inference, processes, rkhs, smallball

EXIT_OK, EXIT_COMPUTE, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# schemas

_PRIOR = {
    "type": "object",
    "additionalProperties": False,
    "required": ["family", "c"],
    "properties": {
        "family": {"enum": ["squared_exponential", "laplace_spectral", "modified_ibm"]},
        "c": {"type": "number", "exclusiveMinimum": 0},
        "k": {"type": "integer", "minimum": 0, "maximum": processes.IBM_MAX_ORDER},
        "a": {"type": ["number", "null"], "exclusiveMinimum": 0},
    },
}

_MCMC = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "chain_length": {"type": "integer", "minimum": 1},
        "burn_in": {"type": "integer", "minimum": 0},
        "thin": {"type": "integer", "minimum": 1},
        "beta_init": {"type": "number", "minimum": 0.01, "maximum": 1},
        "target_acceptance": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "seed": {"type": "integer", "minimum": 0},
    },
}

_GLOBAL = {
    "output_dir": {"type": "string"},
    "seed": {"type": "integer", "minimum": 0},
    "grid_size": {"type": "integer", "minimum": 2, "maximum": 4096},
}

_SETTING = {"enum": ["density", "regression", "classification"]}
_FAMILY = {"enum": ["squared_exponential", "laplace_spectral", "modified_ibm"]}
_TRUTH = {
    "type": "object",
    "additionalProperties": False,
    "required": ["alpha"],
    "properties": {
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "formula": {"enum": ["weierstrass", "poly_smooth", "trig"]},
        "amplitude": {"type": "number"},
    },
}


def _schema(required, props):
    return {"type": "object", "additionalProperties": False, "required": required,
            "properties": {**_GLOBAL, **props}}


SCHEMAS = {
    "sample-prior": _schema(["prior", "n_paths"], {
        "prior": _PRIOR,
        "n_paths": {"type": "integer", "minimum": 1},
    }),
    "smallball": _schema(["priors", "epsilons", "n_paths"], {
        "priors": {"type": "array", "minItems": 1, "items": _PRIOR},
        "epsilons": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
        "n_paths": {"type": "integer", "minimum": smallball.MIN_PATHS},
        "batch_size": {"type": "integer", "minimum": 1},
        "method": {"enum": ["crude", "ghk"]},
        "fit": {"type": "boolean"},
    }),
    "concentration": _schema(["prior", "truth", "epsilons", "n_paths"], {
        "prior": _PRIOR,
        "truth": _TRUTH,
        "epsilons": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
        "n_paths": {"type": "integer", "minimum": smallball.MIN_PATHS},
        "batch_size": {"type": "integer", "minimum": 1},
        "method": {"enum": ["crude", "ghk"]},
        "entropy_net": {"type": "boolean"},
    }),
    "fit": _schema(["setting", "prior_family", "alpha", "n"], {
        "setting": _SETTING,
        "prior_family": _FAMILY,
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "k": {"type": "integer", "minimum": 0, "maximum": processes.IBM_MAX_ORDER},
        "n": {"type": "integer", "minimum": 2},
        "replications": {"type": "integer", "minimum": 1},
        "mcmc": _MCMC,
        "override_c": {"type": ["number", "null"], "exclusiveMinimum": 0},
    }),
    "rates": _schema(["setting", "prior_family", "alpha", "n_values", "replications"], {
        "setting": _SETTING,
        "prior_family": _FAMILY,
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "k": {"type": "integer", "minimum": 0, "maximum": processes.IBM_MAX_ORDER},
        "n_values": {"type": "array", "minItems": 4, "items": {"type": "integer", "minimum": 2}},
        "replications": {"type": "integer", "minimum": 1},
        "mcmc": _MCMC,
        "override_c": {"type": ["number", "null"], "exclusiveMinimum": 0},
    }),
}

DEFAULTS = {
    "sample-prior": {},
    "smallball": {"batch_size": smallball.DEFAULT_BATCH, "method": "crude", "fit": False},
    "concentration": {"batch_size": smallball.DEFAULT_BATCH, "method": "ghk", "entropy_net": False},
    "fit": {"k": 0, "replications": 1, "mcmc": {}, "override_c": None},
    "rates": {"k": 0, "mcmc": {}, "override_c": None},
}
GLOBAL_DEFAULTS = {"output_dir": ".", "seed": 0, "grid_size": processes.DEFAULT_GRID_SIZE}


def resolve_config(command: str, raw: dict, seed=None, output=None) -> dict:
    """Validate ``raw`` (a config or a sidecar) and fill defaults."""
    if isinstance(raw, dict) and set(raw) == {"command", "config", "outputs"}:
        if raw["command"] != command:
            raise ConfigError(f"sidecar was written by {raw['command']!r}, not {command!r}")
        raw = raw["config"]
    try:
        jsonschema.validate(raw, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {path}: {exc.message}") from None
    cfg = {**GLOBAL_DEFAULTS, **copy.deepcopy(DEFAULTS[command]), **copy.deepcopy(raw)}
    if "mcmc" in cfg:
        try:
            cfg["mcmc"] = inference.McmcConfig(**cfg["mcmc"]).to_dict()
        except ValueError as exc:
            raise ConfigError(f"invalid mcmc block: {exc}") from None
    if seed is not None:
        cfg["seed"] = seed
    if output is not None:
        cfg["output_dir"] = output
    _semantic_checks(command, cfg)
    return cfg


def _semantic_checks(command: str, cfg: dict) -> None:
    priors = cfg.get("priors", []) + ([cfg["prior"]] if "prior" in cfg else [])
    for p in priors:
        try:
            make_prior(p)
        except ValueError as exc:
            raise ConfigError(f"invalid prior {p}: {exc}") from None
    if command == "rates":
        ns = cfg["n_values"]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError("n_values must be strictly increasing")
    if command in ("fit", "rates") and cfg["prior_family"] == "modified_ibm" and cfg["alpha"] > cfg["k"] + 1:
        raise ConfigError("modified_ibm needs alpha <= k + 1")


def make_prior(doc: dict) -> processes.GaussianPrior:
    a = doc.get("a", 1.0)
    a = math.inf if a is None else float(a)
    return experiments.build_prior(doc["family"], float(doc["c"]), a, int(doc.get("k", 0)))


# --------------------------------------------------------------------------
# commands; each returns {filename: csv text}


def _csv(write: Callable, *args) -> str:
    buf = io.StringIO()
    write(*args, buf)
    return buf.getvalue()


def cmd_sample_prior(cfg: dict) -> dict:
    prior = make_prior(cfg["prior"])
    grid = processes.default_grid(cfg["grid_size"])
    paths = processes.sample_paths(prior, grid, cfg["n_paths"], cfg["seed"])
    return {"paths.csv": _csv(processes.write_paths_csv, paths)}


def cmd_smallball(cfg: dict) -> dict:
    estimates = []
    for i, doc in enumerate(cfg["priors"]):
        prior = make_prior(doc)
        for j, eps in enumerate(cfg["epsilons"]):
            seed = experiments.cell_seed(cfg["seed"], i, j)
            estimates.append(smallball.smallball_mc(prior, eps, cfg["n_paths"], seed, cfg["grid_size"],
                                                    cfg["batch_size"], cfg["method"]))
    out = {"smallball.csv": _csv(smallball.write_smallball_csv, estimates)}
    if cfg["fit"]:
        fit = smallball.bound_fit(estimates)
        out["bound_fit.csv"] = ("family,fitted_constant,r_squared,n_points\n"
                                f"{fit.family},{fit.fitted_constant!r},{fit.r_squared!r},{len(estimates)}\n")
    return out


def cmd_concentration(cfg: dict) -> dict:
    prior = make_prior(cfg["prior"])
    t = cfg["truth"]
    truth = experiments.SmoothTruth(t["alpha"], t.get("formula", "weierstrass" if t["alpha"] < 1 else "poly_smooth"),
                                    t.get("amplitude", 1.0))
    grid = processes.default_grid(cfg["grid_size"])
    rows = []
    for j, eps in enumerate(cfg["epsilons"]):
        sb = smallball.smallball_mc(prior, eps, cfg["n_paths"], experiments.cell_seed(cfg["seed"], 0, j),
                                    cfg["grid_size"], cfg["batch_size"], cfg["method"])
        rows.append(rkhs.concentration_estimate(prior, truth, eps, sb, grid))
    out = {"concentration.csv": _csv(rkhs.write_concentration_csv, rows)}
    if cfg["entropy_net"] and isinstance(prior, processes.RescaledStationary):
        nets = [rkhs.entropy_net(prior, e) for e in cfg["epsilons"] if e < 0.5]
        out["entropy_net.csv"] = _csv(rkhs.write_entropy_csv, nets)
    return out


def cmd_fit(cfg: dict) -> dict:
    fam = cfg["prior_family"]
    c, a = experiments.scaling_rule(fam, cfg["alpha"], cfg["n"], cfg["k"])
    if cfg["override_c"] is not None:
        c = cfg["override_c"]
    prior = experiments.build_prior(fam, c, a, cfg["k"])
    truth = experiments.make_truth(cfg["setting"], cfg["alpha"])
    grid = processes.default_grid(cfg["grid_size"])
    mcmc = inference.McmcConfig(**cfg["mcmc"])
    rows = []
    for rep in range(cfg["replications"]):
        s = experiments.cell_seed(cfg["seed"], cfg["n"], rep)
        q50, q90, acc = experiments.run_cell(cfg["setting"], prior, truth, cfg["n"], s, grid, mcmc)
        rows.append([cfg["setting"], cfg["n"], rep, repr(q50), repr(q90), repr(float(acc)), s])
    return {"posterior_summary.csv": _csv(inference.write_summary_csv, rows)}


def cmd_rates(cfg: dict) -> dict:
    result = experiments.contraction_experiment(
        cfg["setting"], cfg["prior_family"], cfg["alpha"], cfg["n_values"], cfg["replications"],
        cfg["seed"], cfg["override_c"], cfg["k"], cfg["grid_size"], inference.McmcConfig(**cfg["mcmc"]))
    return {"rates.csv": _csv(experiments.write_rate_csv, [result.fit]),
            "replications.csv": _csv(experiments.write_raw_csv, result.rows)}


COMMANDS = {
    "sample-prior": (cmd_sample_prior, "draw prior sample paths on a grid"),
    "smallball": (cmd_smallball, "estimate small-ball probabilities over a (prior, epsilon) design"),
    "concentration": (cmd_concentration, "upper estimate of the concentration function of a truth"),
    "fit": (cmd_fit, "posterior contraction at a single sample size"),
    "rates": (cmd_rates, "contraction-rate experiment over several sample sizes"),
}


# --------------------------------------------------------------------------


def write_outputs(command: str, cfg: dict, outputs: dict) -> list[Path]:
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    hashes = {name: hashlib.sha256(text.encode("utf-8")).hexdigest() for name, text in outputs.items()}
    written = []
    for name, text in outputs.items():
        path = out_dir / name
        path.write_text(text, encoding="utf-8", newline="")
        sidecar = {"command": command, "config": cfg, "outputs": hashes}
        side = out_dir / f"{name}.json"
        side.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written += [path, side]
    return written


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rescaled-gp", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", required=True, help="JSON config file, or a sidecar from an earlier run")
        p.add_argument("--output", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        cfg = resolve_config(args.command, raw, args.seed, args.output)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"rescaled-gp: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    func = COMMANDS[args.command][0]
    try:
        outputs = func(cfg)
    except (ArithmeticError, ValueError, RuntimeError, MemoryError) as exc:
        print(f"rescaled-gp: computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    for path in write_outputs(args.command, cfg, outputs):
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
