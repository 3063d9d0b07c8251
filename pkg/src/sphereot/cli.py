"""Command-line interface: ``sphereot {distance,flow,evolve,bench}``.

Settings come from an optional JSON config (``--config``); command-line
flags override it. Unknown config keys are rejected. Exit codes: 0 on
success, 2 for invalid configuration or input, 3 for numerical failures.
"""

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import evolution
from .exceptions import ConfigError, NumericalError
from .flows import PRESETS, FlowConfig, icosahedron_target, run_flow
from .sliced import SlicedConfig, dssw_hat, ssw_hat, sw_hat
from .sphere import VmfComponent, icosahedron_mixture, sample_uniform_sphere, sample_vmf
from .validation import check_choice, check_sphere_array
from .weighting import ENERGY_KINDS, EnergySpec

logger = logging.getLogger("sphereot")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

DEFAULTS = {
    "distance": {
        "x": None, "y": None, "method": "dssw", "kind": "exp", "p": 2, "L": 100,
        "seed": 0, "solver": "auto", "prefactor": "literal", "epochs": 10, "lr": 0.1,
        "maximize": False, "final_weights": "network", "threads": 1, "timing": False,
    },
    "flow": {
        "preset": "mini", "method": "dssw", "kind": "exp", "p": 2, "L": None, "seed": 0,
        "steps": None, "lr": None, "optimizer": None, "batch_size": None,
        "n_particles": None, "eval_every": None, "eval_subsample": None, "kappa": 50.0,
        "n_per_component": 200, "threads": 1, "out": "flow_out", "timing": False,
    },
    "evolve": {
        "sweep": "kappa", "values": None, "seeds": 20, "n": 500, "d": 3, "L": 100,
        "kappa": 10.0, "method": "dssw", "kind": "exp", "p": 2, "prefactor": "literal",
        "seed": 0, "out": None,
    },
    "bench": {
        "grid": None, "repeats": 5, "methods": list(bench_mod.DEFAULT_METHODS), "p": 2,
        "epochs": 50, "seed": 0, "threads": 1, "out": None,
    },
}

FLAG_KEYS = ("seed", "out", "threads", "method", "kind", "p", "L")


def load_config(command, obj=None, overrides=None):
    """Merge defaults, a config mapping and flag overrides; reject unknown keys."""
    cfg = dict(DEFAULTS[command])
    obj = obj or {}
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(obj) - set(cfg)
    if unknown:
        raise ConfigError(f"unknown {command} config keys: {sorted(unknown)}")
    cfg.update(obj)
    for k, v in (overrides or {}).items():
        if v is not None:
            if k not in cfg:
                raise ConfigError(f"--{k} is not used by the {command} command")
            cfg[k] = v
    return cfg


def dump_config(cfg):
    return json.dumps(cfg, sort_keys=True)


# --------------------------------------------------------------------------
# inputs

def read_samples(path):
    """Read a CSV sample file with header ``x0..x{d-1}``; rows are renormalised."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty sample file")
    header = rows[0]
    if header != [f"x{j}" for j in range(len(header))]:
        raise ConfigError(f"{path}: header must be x0,...,x{{d-1}}")
    try:
        X = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=np.float64)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] != len(header):
        raise ConfigError(f"{path}: expected at least one row of {len(header)} values")
    return check_sphere_array(X, name=str(path), normalize=True)


def write_samples(path, X):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j}" for j in range(X.shape[1])])
        for row in X:
            w.writerow([repr(float(v)) for v in row])


def _synthetic(spec, seed, slot):
    if not isinstance(spec, dict):
        raise ConfigError("synthetic inputs are objects with a 'type' key")
    spec = dict(spec)
    kind = spec.pop("type", None)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 100 + slot]))
    n = spec.pop("n", 500)
    if kind == "uniform":
        d = spec.pop("d", 3)
        if spec:
            raise ConfigError(f"unknown uniform keys: {sorted(spec)}")
        return sample_uniform_sphere(d, n, rng)
    if kind == "vmf":
        mean = spec.pop("mean", [1.0, 0.0, 0.0])
        kappa = spec.pop("kappa", 10.0)
        if spec:
            raise ConfigError(f"unknown vmf keys: {sorted(spec)}")
        return sample_vmf(VmfComponent(mean, kappa), n, rng)
    raise ConfigError(f"synthetic input type must be 'uniform' or 'vmf', got {kind!r}")


def _input(spec, seed, slot):
    if spec is None:
        raise ConfigError("distance needs inputs 'x' and 'y' (file paths or synthetic specs)")
    if isinstance(spec, str):
        return read_samples(spec)
    return _synthetic(spec, seed, slot)


# --------------------------------------------------------------------------
# commands

def cmd_distance(cfg):
    check_choice(cfg["method"], "method", ("sw", "ssw", "dssw"))
    X = _input(cfg["x"], cfg["seed"], 0)
    Y = _input(cfg["y"], cfg["seed"], 1)
    sc = SlicedConfig(p=cfg["p"], L=cfg["L"], solver=cfg["solver"], seed=cfg["seed"],
                      prefactor=cfg["prefactor"], threads=cfg["threads"],
                      energy=EnergySpec(kind=cfg["kind"], epochs=cfg["epochs"], lr=cfg["lr"],
                                        maximize=cfg["maximize"],
                                        final_weights=cfg["final_weights"]))
    if cfg["method"] == "sw":
        out = {"method": "sw", "p": sc.p, "L": sc.L, "value": sw_hat(X, Y, sc),
               "frames_seed": sc.seed}
    else:
        fn = dssw_hat if cfg["method"] == "dssw" else ssw_hat
        out = fn(X, Y, sc).to_dict(timing=cfg["timing"])
    print(json.dumps(out))
    return out


def flow_config(cfg):
    check_choice(cfg["preset"], "preset", tuple(PRESETS) + (None,))
    opts = dict(PRESETS[cfg["preset"]]) if cfg["preset"] else dict(
        optimizer="adam", lr=1e-3, steps=500, batch_size=None, n_particles=2400,
        eval_every=50, eval_subsample=None, L=1000)
    for key in ("L", "steps", "lr", "optimizer", "batch_size", "n_particles", "eval_every",
                "eval_subsample"):
        if cfg[key] is not None:
            opts[key] = cfg[key]
    L = opts.pop("L")
    dist = SlicedConfig(p=cfg["p"], L=L, seed=cfg["seed"], threads=cfg["threads"],
                        energy=EnergySpec(kind=cfg["kind"]))
    return FlowConfig(method=cfg["method"], distance=dist, **opts)


def cmd_flow(cfg):
    fc = flow_config(cfg)
    mixture = icosahedron_mixture(cfg["kappa"])
    target = icosahedron_target(cfg["n_per_component"], cfg["kappa"],
                                np.random.default_rng(np.random.SeedSequence([cfg["seed"], 200])))
    result = run_flow(None, target, fc, mixture=mixture, record_trajectory=True)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "trajectory.csv").write_text(result.trajectory_csv())
    (out / "metrics.ndjson").write_text(result.metrics_ndjson(timing=cfg["timing"]))
    last = result.trace[-1]
    summary = {"step": last["step"], "nll": last["nll"], "log_w2": last["log_w2"]}
    print(json.dumps(summary))
    return summary


def cmd_evolve(cfg):
    values = cfg["values"] or evolution.DEFAULT_VALUES[cfg["sweep"]]
    ec = evolution.EvolveConfig(
        sweep=cfg["sweep"], values=tuple(values), seeds=cfg["seeds"], n=cfg["n"], d=cfg["d"],
        L=cfg["L"], kappa=cfg["kappa"], method=cfg["method"], kind=cfg["kind"], p=cfg["p"],
        prefactor=cfg["prefactor"], seed=cfg["seed"])
    text = evolution.to_csv(evolution.evolve(ec))
    if cfg["out"]:
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / f"evolve_{cfg['sweep']}.csv").write_text(text)
    sys.stdout.write(text)
    return text


def cmd_bench(cfg):
    grid = [tuple(int(v) for v in g) for g in (cfg["grid"] or bench_mod.DEFAULT_GRID)]
    if any(len(g) != 3 for g in grid):
        raise ConfigError("bench grid entries are [n, L, d] triples")
    points = bench_mod.run_bench(grid, repeats=cfg["repeats"], seed=cfg["seed"], p=cfg["p"],
                                 epochs=cfg["epochs"], threads=cfg["threads"],
                                 methods=tuple(cfg["methods"]))
    text = bench_mod.to_csv(points)
    if cfg["out"]:
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.csv").write_text(text)
    sys.stdout.write(text)
    return points


COMMANDS = {"distance": cmd_distance, "flow": cmd_flow, "evolve": cmd_evolve,
            "bench": cmd_bench}


def build_parser():
    parser = argparse.ArgumentParser(prog="sphereot", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=str, help="output directory")
        p.add_argument("--threads", type=int)
        p.add_argument("--method", choices=("sw", "ssw", "dssw"))
        p.add_argument("--kind", choices=ENERGY_KINDS)
        p.add_argument("--p", type=int, choices=(1, 2))
        p.add_argument("--L", type=int)
        if name in ("distance", "flow"):
            p.add_argument("--timing", action="store_true", default=None,
                           help="include wall-clock fields (output is then not reproducible)")
        if name == "flow":
            p.add_argument("--preset", choices=tuple(PRESETS))
            p.add_argument("--steps", type=int)
        if name == "evolve":
            p.add_argument("--sweep", choices=evolution.SWEEPS)
    return parser


def _setup_logging():
    level = os.environ.get("SPHEREOT_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        obj = None
        if args.config is not None:
            try:
                obj = json.loads(args.config.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        overrides = {k: getattr(args, k) for k in FLAG_KEYS}
        for extra in ("timing", "preset", "steps", "sweep"):
            if hasattr(args, extra):
                overrides[extra] = getattr(args, extra)
        if args.command == "distance" and overrides.get("out") is not None:
            raise ConfigError("the distance command prints to stdout and takes no --out")
        cfg = load_config(args.command, obj, overrides)
        COMMANDS[args.command](cfg)
    except NumericalError as exc:
        print(f"sphereot: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, TypeError, OSError) as exc:
        print(f"sphereot: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
