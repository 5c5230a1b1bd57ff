"""Command-line entry point: configuration, orchestration, persistence.

Subcommands: ``simulate``, ``sample-kernel``, ``sample-equilibrium``,
``experiment <name>`` and ``kernel-table``.  Every run takes a JSON config
document plus ``--set key=value`` overrides, validates it against the
command's schema (unknown keys are rejected), and writes CSV artifacts and
a JSON report that echoes the fully resolved config and the tool version.
Exit codes: 0 all verdicts pass, 2 an experiment verdict failed, 1 usage
or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .core import OmegaPlusPoint, OrderedConfig, SdeParams
from .equilibrium import inverse_bessel_kernel, inverse_laguerre_samples, laguerre_samples
from .errors import ConfigError, HardedgeError
from .experiments import (
    bump_function,
    run_collision_bound,
    run_coupling_l2,
    run_equilibrium,
    run_hard_edge_density,
    run_intertwining,
    run_matrix_eigen_agreement,
    run_uniform_approx,
)
from .kernels import chain_samples
from .rng import RandomSource
from .sde import simulate

FLOAT_FMT = ".17g"


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def _coerce(value, kind, key):
    try:
        if kind == "float":
            out = float(value)
        elif kind == "int":
            out = int(value)
            if out != float(value):
                raise ValueError
        elif kind == "bool":
            if isinstance(value, bool):
                return value
            raise ValueError
        elif kind == "list":
            out = list(value)
            if not isinstance(value, (list, tuple)):
                raise ValueError
        elif kind == "str":
            if not isinstance(value, str):
                raise ValueError
            out = value
        else:  # pragma: no cover
            raise AssertionError(kind)
    except (TypeError, ValueError):
        raise ConfigError(f"key {key!r}: expected {kind}, got {value!r}") from None
    return out


def resolve_config(schema: dict, document: dict, context: str) -> dict:
    """Validate a config document against {key: (kind, default-or-None)}.

    Unknown keys are rejected; required keys (default marker REQUIRED) must
    be present.
    """
    unknown = set(document) - set(schema)
    if unknown:
        raise ConfigError(f"{context}: unknown config keys {sorted(unknown)}")
    resolved = {}
    for key, (kind, default) in schema.items():
        if key in document:
            value = document[key]
            resolved[key] = value if value is None and default is None else _coerce(value, kind, key)
        elif default is REQUIRED:
            raise ConfigError(f"{context}: missing required key {key!r}")
        else:
            resolved[key] = default
    return resolved


REQUIRED = object()


def _apply_overrides(document: dict, overrides: list[str]) -> dict:
    doc = dict(document)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        key, raw = item.split("=", 1)
        target = doc
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigError(f"--set path {key!r} crosses a non-object value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target[parts[-1]] = value
    return doc


def _load_document(path: str | None, overrides: list[str]) -> dict:
    if path is None:
        doc = {}
    else:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: invalid JSON at line {exc.lineno}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {path}: top level must be an object")
    return _apply_overrides(doc, overrides)


def _resolve_seed(args, config: dict) -> int:
    if args.seed is not None:
        return int(args.seed)
    if config.get("seed") is not None:
        return int(config["seed"])
    env = os.environ.get("HARDEDGE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"HARDEDGE_SEED must be an integer, got {env!r}") from None
    return 0


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------

def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format(float(v), FLOAT_FMT) for v in row) + "\n")


def read_trajectory_csv(path: str):
    """Read back a trajectory written by the simulate command."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [list(map(float, line.strip().split(","))) for line in fh if line.strip()]
    data = np.array(rows)
    return header, data[:, 0], data[:, 1:]


def _write_report(path: str, report, config: dict) -> None:
    doc = report.as_dict()
    doc["config"] = config
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _cmd_simulate(args) -> int:
    schema = {
        "seed": ("int", None),
        "initial": ("list", REQUIRED),
        "eta": ("float", 0.0),
        "rescaled": ("bool", False),
        "dt_max": ("float", 1e-3),
        "gap_safety": ("float", 0.1),
        "horizon": ("float", REQUIRED),
        "save_times": ("list", REQUIRED),
        "integrator": ("str", "log"),
        "stream": ("int", 0),
    }
    cfg = resolve_config(schema, _load_document(args.config, args.set), "simulate")
    seed = _resolve_seed(args, cfg)
    cfg["seed"] = seed
    params = SdeParams(
        eta=cfg["eta"], rescaled=cfg["rescaled"], dt_max=cfg["dt_max"], gap_safety=cfg["gap_safety"]
    )
    traj = simulate(
        OrderedConfig(cfg["initial"]),
        params,
        cfg["horizon"],
        cfg["save_times"],
        RandomSource(seed, cfg["stream"]),
        integrator=cfg["integrator"],
    )
    out = os.path.join(args.out, "trajectory.csv")
    n = traj.n
    _write_csv(
        out,
        ["t"] + [f"x{i + 1}" for i in range(n)],
        ([t] + list(state.values) for t, state in zip(traj.times, traj.states)),
    )
    print(f"wrote {out}")
    return 0


def _cmd_sample_kernel(args) -> int:
    schema = {
        "seed": ("int", None),
        "x": ("list", REQUIRED),
        "K": ("int", REQUIRED),
        "n": ("int", REQUIRED),
        "stream": ("int", 0),
    }
    cfg = resolve_config(schema, _load_document(args.config, args.set), "sample-kernel")
    seed = _resolve_seed(args, cfg)
    samples = chain_samples(
        OrderedConfig(cfg["x"]), cfg["K"], cfg["n"], RandomSource(seed, cfg["stream"])
    )
    out = os.path.join(args.out, "samples.csv")
    _write_csv(out, [f"y{i + 1}" for i in range(cfg["K"])], samples)
    print(f"wrote {out}")
    return 0


def _cmd_sample_equilibrium(args) -> int:
    schema = {
        "seed": ("int", None),
        "N": ("int", REQUIRED),
        "eta": ("float", REQUIRED),
        "n": ("int", REQUIRED),
        "inverse": ("bool", True),
        "stream": ("int", 0),
    }
    cfg = resolve_config(schema, _load_document(args.config, args.set), "sample-equilibrium")
    seed = _resolve_seed(args, cfg)
    sampler = inverse_laguerre_samples if cfg["inverse"] else laguerre_samples
    samples = sampler(cfg["N"], cfg["eta"], cfg["n"], RandomSource(seed, cfg["stream"]))
    out = os.path.join(args.out, "samples.csv")
    _write_csv(out, [f"x{i + 1}" for i in range(cfg["N"])], samples)
    print(f"wrote {out}")
    return 0


def _cmd_kernel_table(args) -> int:
    schema = {
        "seed": ("int", None),
        "eta": ("float", REQUIRED),
        "grid": ("list", REQUIRED),
    }
    cfg = resolve_config(schema, _load_document(args.config, args.set), "kernel-table")
    grid = np.asarray([float(g) for g in cfg["grid"]])
    if grid.size < 1 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ConfigError("grid must be positive and increasing")
    out = os.path.join(args.out, "kernel.csv")
    rows = (
        (x, y, inverse_bessel_kernel(cfg["eta"], x, y)) for x in grid for y in grid
    )
    _write_csv(out, ["x", "y", "value"], rows)
    print(f"wrote {out}")
    return 0


def _geometric_family(sizes, ratio, scale):
    return [
        OrderedConfig(scale * m * ratio ** np.arange(1, m + 1)) for m in sizes
    ]


_EXPERIMENT_SCHEMAS = {
    "intertwining": {
        "seed": ("int", None),
        "x": ("list", REQUIRED),
        "t": ("float", REQUIRED),
        "eta": ("float", 0.0),
        "eta_corner_side": ("float", None),
        "n": ("int", REQUIRED),
        "dt": ("float", 5e-4),
        "n_perm": ("int", 500),
        "dt_check": ("bool", False),
    },
    "uniform-approx": {
        "seed": ("int", None),
        "K": ("int", 1),
        "sizes": ("list", REQUIRED),
        "ratio": ("float", 0.5),
        "scale": ("float", 1.0),
        "bump": ("list", [0.2, 0.8]),
        "n": ("int", REQUIRED),
        "threshold": ("float", 0.02),
    },
    "equilibrium": {
        "seed": ("int", None),
        "N": ("int", REQUIRED),
        "eta": ("float", REQUIRED),
        "x0": ("list", None),
        "t_grid": ("list", REQUIRED),
        "n": ("int", REQUIRED),
        "dt": ("float", 1e-3),
        "n_perm": ("int", 300),
        "dt_check": ("bool", False),
    },
    "coupling-l2": {
        "seed": ("int", None),
        "omega_xs": ("list", REQUIRED),
        "gamma": ("float", None),
        "N_list": ("list", REQUIRED),
        "T": ("float", REQUIRED),
        "dt": ("float", 2e-4),
        "eta": ("float", 0.0),
    },
    "collision-bound": {
        "seed": ("int", None),
        "sizes": ("list", REQUIRED),
        "ratio": ("float", 0.5),
        "scale": ("float", 1.0),
        "delta": ("float", REQUIRED),
        "eps": ("float", REQUIRED),
        "t": ("float", REQUIRED),
        "n": ("int", REQUIRED),
        "eta": ("float", 0.0),
        "dt": ("float", 1e-3),
        "dt_check": ("bool", False),
    },
    "hard-edge-density": {
        "seed": ("int", None),
        "N": ("int", REQUIRED),
        "eta": ("float", REQUIRED),
        "n": ("int", REQUIRED),
        "bins": ("list", REQUIRED),
        "top": ("int", 3),
        "min_count": ("int", 100),
        "tol": ("float", 0.15),
    },
    "matrix-eigen-agreement": {
        "seed": ("int", None),
        "N": ("int", REQUIRED),
        "eta": ("float", 0.0),
        "x0": ("list", REQUIRED),
        "t": ("float", REQUIRED),
        "n": ("int", REQUIRED),
        "dt": ("float", 1e-3),
        "dt_check": ("bool", False),
    },
}


def _run_experiment(name: str, cfg: dict, rng: RandomSource, threads: int):
    if name == "intertwining":
        return run_intertwining(
            OrderedConfig(cfg["x"]),
            cfg["t"],
            cfg["eta"],
            cfg["n"],
            rng,
            dt=cfg["dt"],
            eta_corner_side=cfg["eta_corner_side"],
            n_perm=cfg["n_perm"],
            threads=threads,
            dt_check=cfg["dt_check"],
        )
    if name == "uniform-approx":
        lo, hi = (float(v) for v in cfg["bump"])
        family = _geometric_family([int(s) for s in cfg["sizes"]], cfg["ratio"], cfg["scale"])
        return run_uniform_approx(
            cfg["K"], bump_function(lo, hi), family, cfg["n"], rng,
            threshold=cfg["threshold"], threads=threads,
        )
    if name == "equilibrium":
        x0 = None if cfg["x0"] is None else OrderedConfig(cfg["x0"])
        return run_equilibrium(
            cfg["N"], cfg["eta"], x0, [float(t) for t in cfg["t_grid"]], cfg["n"], rng,
            dt=cfg["dt"], n_perm=cfg["n_perm"], threads=threads, dt_check=cfg["dt_check"],
        )
    if name == "coupling-l2":
        xs = np.asarray([float(v) for v in cfg["omega_xs"]])
        gamma = float(xs.sum()) if cfg["gamma"] is None else cfg["gamma"]
        return run_coupling_l2(
            OmegaPlusPoint(xs, gamma), [int(m) for m in cfg["N_list"]],
            cfg["T"], cfg["dt"], rng, eta=cfg["eta"],
        )
    if name == "collision-bound":
        family = _geometric_family([int(s) for s in cfg["sizes"]], cfg["ratio"], cfg["scale"])
        return run_collision_bound(
            family, cfg["delta"], cfg["eps"], cfg["t"], cfg["n"], rng,
            eta=cfg["eta"], dt=cfg["dt"], threads=threads, dt_check=cfg["dt_check"],
        )
    if name == "hard-edge-density":
        return run_hard_edge_density(
            cfg["N"], cfg["eta"], cfg["n"], [float(b) for b in cfg["bins"]], rng,
            top=cfg["top"], min_count=cfg["min_count"], tol=cfg["tol"], threads=threads,
        )
    if name == "matrix-eigen-agreement":
        return run_matrix_eigen_agreement(
            cfg["N"], cfg["eta"], np.diag(np.asarray(cfg["x0"], dtype=float)),
            cfg["t"], cfg["n"], rng, dt=cfg["dt"], threads=threads, dt_check=cfg["dt_check"],
        )
    raise ConfigError(f"unknown experiment {name!r}")  # pragma: no cover


def _cmd_experiment(args) -> int:
    name = args.name
    if name not in _EXPERIMENT_SCHEMAS:
        raise ConfigError(
            f"unknown experiment {name!r}; choose from {sorted(_EXPERIMENT_SCHEMAS)}"
        )
    cfg = resolve_config(
        _EXPERIMENT_SCHEMAS[name], _load_document(args.config, args.set), f"experiment {name}"
    )
    seed = _resolve_seed(args, cfg)
    cfg["seed"] = seed
    report = _run_experiment(name, cfg, RandomSource(seed), args.threads)
    out = os.path.join(args.out, "report.json")
    _write_report(out, report, cfg)
    stats_csv = os.path.join(args.out, f"{report.name}_statistics.csv")
    with open(stats_csv, "w") as fh:
        fh.write("statistic,value\n")
        for key in sorted(report.statistics):
            fh.write(f"{key},{format(float(report.statistics[key]), FLOAT_FMT)}\n")
    print(report.summary())
    print(f"wrote {out}")
    return 0 if report.passed else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hardedge",
        description="Numerical laboratory for hard-edge eigenvalue diffusions",
    )
    parser.add_argument("--version", action="version", version=f"hardedge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config document")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (dotted paths allowed)")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       help="worker threads (results are identical for any value)")

    p_sim = sub.add_parser("simulate", help="integrate one path and save it")
    common(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_sk = sub.add_parser("sample-kernel", help="draw chain-kernel samples")
    common(p_sk)
    p_sk.set_defaults(func=_cmd_sample_kernel)

    p_se = sub.add_parser("sample-equilibrium", help="draw equilibrium ensemble samples")
    common(p_se)
    p_se.set_defaults(func=_cmd_sample_equilibrium)

    p_kt = sub.add_parser("kernel-table", help="tabulate the inverse Bessel kernel")
    common(p_kt)
    p_kt.set_defaults(func=_cmd_kernel_table)

    p_ex = sub.add_parser("experiment", help="run a named experiment")
    p_ex.add_argument("name", help=f"one of {sorted(_EXPERIMENT_SCHEMAS)}")
    common(p_ex)
    p_ex.set_defaults(func=_cmd_experiment)

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1

    try:
        os.makedirs(args.out, exist_ok=True)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except HardedgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
