"""Command line front end.

Settings are resolved in three layers: built-in defaults, then the JSON
document given by ``--config``, then command line flags.

Exit status: 0 on success, 2 on invalid configuration, 3 on numeric failure.
"""
import argparse
import json
import math
import os
from pathlib import Path
import sys
import time

import numpy as np

from . import __version__
from .errors import HeatBEMError, MeshError, NumericError, ParseError
from .parallel import get_threads, set_threads

COMMANDS = ("solve", "converge", "divergence", "check-b", "check-kernels")

DEFAULTS = {
    "alpha": 1.0,
    "quad_level": 3,
    "out": "heatbem-out",
    "threads": None,
    "mesh": {"generator": "cube", "n": 2},
    "partition": {"T": 1.0, "N": 8, "grading": "uniform"},
    "problem": "dirichlet",
    "datum": "manufactured",
    "datum_value": 1.0,
    "source": [0.5, 0.5, 2.0],
    "levels": 3,
    "epsilons": [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4],
    "seed": 0,
    "n_points": 10000,
}

# command-specific defaults, applied before the config file
COMMAND_DEFAULTS = {
    "divergence": {"mesh": {"generator": "cube", "n": 4}, "quad_level": 4},
    "check-b": {"mesh": {"generator": "cube", "n": 1}, "partition": {"T": 1.0, "N": 4, "grading": "uniform"},
                "quad_level": 4},
}


class ConfigError(Exception):
    def __init__(self, field, message):
        super().__init__(f"invalid {field}: {message}")
        self.field = field


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON configuration document")
    common.add_argument("--threads", type=int, metavar="N", help="worker threads (default: all cores)")
    common.add_argument("--quad-level", type=int, metavar="K", dest="quad_level", help="quadrature tier")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--dry-run", action="store_true", help="validate and print the plan without computing")
    common.add_argument("--alpha", type=float, help="diffusivity")
    common.add_argument("--mesh", metavar="PATH", help="mesh file (overrides the generator)")
    common.add_argument("--cube-n", type=int, metavar="N", dest="cube_n", help="generated cube subdivisions")
    common.add_argument("--T", type=float, dest="T", help="final time")
    common.add_argument("--nt", type=int, metavar="N", help="number of time steps")
    common.add_argument("--grading", choices=["uniform", "graded"], help="time partition grading")

    parser = argparse.ArgumentParser(prog="heatbem", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"heatbem {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", parents=[common], help="solve a Dirichlet or Neumann problem")
    p.add_argument("--problem", choices=["dirichlet", "neumann"])
    p.add_argument("--datum", choices=["manufactured", "constant", "zero"])
    p.add_argument("--datum-value", type=float, dest="datum_value")
    p = sub.add_parser("converge", parents=[common], help="manufactured-solution convergence study")
    p.add_argument("--problem", choices=["dirichlet", "neumann"])
    p.add_argument("--levels", type=int)
    p = sub.add_parser("divergence", parents=[common], help="growth of the truncated naive b-form integral")
    p.add_argument("--epsilons", type=lambda s: [float(v) for v in s.split(",")], metavar="E1,E2,...")
    sub.add_parser("check-b", parents=[common], help="closed-form vs history-quadrature b-form")
    p = sub.add_parser("check-kernels", parents=[common], help="kernel property suite")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-points", type=int, dest="n_points")
    return parser


def _merge(base, update):
    out = dict(base)
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def resolve_config(args):
    """Defaults, then the JSON document, then flags."""
    cfg = _merge(DEFAULTS, COMMAND_DEFAULTS.get(args.command, {}))
    if args.config:
        try:
            with open(args.config) as f:
                doc = json.load(f)
        except OSError as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc.strerror}")
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{args.config} is not valid JSON ({exc})")
        if not isinstance(doc, dict):
            raise ConfigError("config", "top level must be a JSON object")
        doc.pop("command", None)
        cfg = _merge(cfg, doc)
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config", "dry_run")}
    if "mesh" in flags:
        cfg["mesh"] = {"file": flags.pop("mesh")}
    if "cube_n" in flags:
        cfg["mesh"] = {"generator": "cube", "n": flags.pop("cube_n")}
    for key, name in (("T", "T"), ("nt", "N"), ("grading", "grading")):
        if key in flags:
            cfg["partition"] = dict(cfg["partition"], **{name: flags.pop(key)})
    cfg.update(flags)
    cfg["command"] = args.command
    validate_config(cfg)
    return cfg


def _positive(cfg, key, kind=float):
    v = cfg.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and int(v) != v):
        raise ConfigError(key, f"expected a {'positive integer' if kind is int else 'positive number'}, got {v!r}")
    if not (math.isfinite(v) and v > 0):
        raise ConfigError(key, f"must be positive and finite, got {v!r}")


def validate_config(cfg):
    _positive(cfg, "alpha")
    _positive(cfg, "levels", int)
    _positive(cfg, "n_points", int)
    lev = cfg.get("quad_level")
    if isinstance(lev, bool) or not isinstance(lev, int) or not 0 <= lev <= 8:
        raise ConfigError("quad_level", f"expected an integer in 0..8, got {lev!r}")
    if cfg.get("threads") is not None:
        _positive(cfg, "threads", int)
    mesh = cfg.get("mesh")
    if not isinstance(mesh, dict):
        raise ConfigError("mesh", "expected an object with 'file' or 'generator'")
    if "file" in mesh:
        if not Path(mesh["file"]).is_file():
            raise ConfigError("mesh", f"file {mesh['file']!r} does not exist")
    elif mesh.get("generator") == "cube":
        n = mesh.get("n")
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise ConfigError("mesh", f"cube subdivisions must be a positive integer, got {n!r}")
    else:
        raise ConfigError("mesh", f"unknown mesh source {mesh!r}")
    part = cfg.get("partition")
    if not isinstance(part, dict):
        raise ConfigError("partition", "expected an object with T, N and grading")
    T, N = part.get("T"), part.get("N")
    if isinstance(T, bool) or not isinstance(T, (int, float)) or not (math.isfinite(T) and T > 0):
        raise ConfigError("partition", f"T must be positive, got {T!r}")
    if isinstance(N, bool) or not isinstance(N, int) or N < 1:
        raise ConfigError("partition", f"N must be a positive integer, got {N!r}")
    if part.get("grading", "uniform") not in ("uniform", "graded"):
        raise ConfigError("partition", f"unknown grading {part.get('grading')!r}")
    if cfg.get("problem") not in ("dirichlet", "neumann"):
        raise ConfigError("problem", f"expected 'dirichlet' or 'neumann', got {cfg.get('problem')!r}")
    if cfg.get("datum") not in ("manufactured", "constant", "zero"):
        raise ConfigError("datum", f"expected manufactured, constant or zero, got {cfg.get('datum')!r}")
    src = cfg.get("source")
    if not (isinstance(src, list) and len(src) == 3 and all(isinstance(v, (int, float)) for v in src)):
        raise ConfigError("source", "expected three coordinates")
    eps = cfg.get("epsilons")
    if not (isinstance(eps, list) and len(eps) >= 3 and all(isinstance(v, (int, float)) for v in eps)):
        raise ConfigError("epsilons", "expected a list of at least three numbers")
    if cfg["command"] == "divergence":
        if any(not (0 < e < T) for e in eps):
            raise ConfigError("epsilons", f"every value must lie in (0, T) with T = {T}")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("epsilons", "values must be strictly decreasing")
    if cfg["command"] == "converge" and cfg["levels"] < 3:
        raise ConfigError("levels", "a convergence study needs at least three levels")
    if not isinstance(cfg.get("seed"), int) or isinstance(cfg.get("seed"), bool):
        raise ConfigError("seed", f"expected an integer, got {cfg.get('seed')!r}")
    out = Path(cfg["out"]).absolute()
    probe = out
    while not probe.exists():
        probe = probe.parent
    if not probe.is_dir() or not os.access(probe, os.W_OK):
        raise ConfigError("out", f"{out} is not a writable directory")


def _load_mesh(cfg):
    from .geometry import generate_cube_mesh, load_mesh

    m = cfg["mesh"]
    if "file" in m:
        try:
            return load_mesh(m["file"])
        except (ParseError, MeshError) as exc:
            raise ConfigError("mesh", str(exc))
    return generate_cube_mesh(m["n"])


def _partition(cfg):
    from .geometry import make_time_partition

    p = cfg["partition"]
    return make_time_partition(float(p["T"]), p["N"], p.get("grading", "uniform"))


def _write_meta(out, cfg, extra):
    meta = {"config": cfg, "version": __version__, **extra}
    with open(Path(out) / "meta.json", "w") as f:
        json.dump(_plain(meta), f, indent=2, sort_keys=True)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _study_meta(study):
    return {"study": study.name, **study.metadata}


def cmd_solve(cfg):
    from .bie_solver import (
        BoundaryDatum,
        DatumKind,
        evaluate_solution_interior,
        manufactured_solution,
        solve_dirichlet,
        solve_neumann,
        write_interior_csv,
    )
    from .experiments import DEFAULT_PROBES

    mesh, part = _load_mesh(cfg), _partition(cfg)
    kind = DatumKind(cfg["problem"])
    u = None
    if cfg["datum"] == "manufactured":
        u, g, h = manufactured_solution(cfg["source"], cfg["alpha"])
        datum = g if kind is DatumKind.DIRICHLET else h
    else:
        value = cfg["datum_value"] if cfg["datum"] == "constant" else 0.0
        datum = BoundaryDatum.constant(value, kind)
    solve = solve_dirichlet if kind is DatumKind.DIRICHLET else solve_neumann
    rep = solve(mesh, part, datum, cfg["alpha"], cfg["quad_level"])
    out = Path(cfg["out"])
    rep.density.to_csv(out / "density.csv")
    probes = DEFAULT_PROBES.copy()
    probes[:, 3] *= part.T
    inside = mesh.contains(probes[:, :3]) & (mesh.distance_to_surface(probes[:, :3]) > 0)
    probes = probes[inside]
    values = evaluate_solution_interior(rep, probes) if len(probes) else np.zeros(0)
    write_interior_csv(out / "interior.csv", probes[:, :3], probes[:, 3], values)
    extra = {
        "n_triangles": mesh.n_triangles,
        "n_vertices": mesh.n_vertices,
        "N_t": part.n_steps,
        "dofs": rep.density.descriptor.dof_count,
        "max_block_residual": float(np.max(rep.residuals)),
        "min_rcond": float(np.min(rep.rcond)),
        "factorizations": rep.factorizations,
        "solve_seconds": rep.wall_time,
    }
    if u is not None and len(probes):
        exact = u(probes[:, :3], probes[:, 3])
        extra["relative_interior_error"] = float(np.max(np.abs(values - exact)) / np.max(np.abs(exact)))
    _write_meta(out, cfg, extra)
    return f"solved {kind.value} problem: {extra['dofs']} unknowns, outputs in {out}"


def cmd_converge(cfg):
    from .experiments import convergence_study

    r = convergence_study(cfg["problem"], cfg["levels"], cfg["alpha"], tuple(cfg["source"]),
                          float(cfg["partition"]["T"]), quad_level=cfg["quad_level"])
    out = Path(cfg["out"])
    r.to_csv(out / "convergence.csv")
    _write_meta(out, cfg, _study_meta(r))
    return f"convergence ratios: {', '.join(f'{x:.3g}' for x in r.metadata['ratios'])}"


def cmd_divergence(cfg):
    from .experiments import divergence_study

    mesh = _load_mesh(cfg)
    r = divergence_study(mesh, float(cfg["partition"]["T"]), cfg["alpha"], cfg["epsilons"], cfg["quad_level"])
    out = Path(cfg["out"])
    r.to_csv(out / "divergence.csv")
    _write_meta(out, cfg, _study_meta(r))
    return f"fitted slope {r.metadata['slope']:.6f}"


def cmd_check_b(cfg):
    from .experiments import b_consistency_check

    r = b_consistency_check(_load_mesh(cfg), _partition(cfg), cfg["alpha"], cfg["quad_level"])
    out = Path(cfg["out"])
    r.to_csv(out / "check_b.csv")
    _write_meta(out, cfg, _study_meta(r))
    return f"Frobenius-relative difference {r.metadata['frobenius_relative']:.3e}"


def cmd_check_kernels(cfg):
    from .experiments import kernel_property_suite

    r = kernel_property_suite(cfg["n_points"], cfg["seed"])
    out = Path(cfg["out"])
    r.to_csv(out / "check_kernels.csv")
    _write_meta(out, cfg, _study_meta(r))
    return f"kernel checks: {r.metadata['total_failures']} failures"


HANDLERS = {
    "solve": cmd_solve,
    "converge": cmd_converge,
    "divergence": cmd_divergence,
    "check-b": cmd_check_b,
    "check-kernels": cmd_check_kernels,
}


def run(argv=None):
    """Parse ``argv``, execute, and return the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        cfg = resolve_config(args)
        if cfg.get("threads") is not None:
            set_threads(cfg["threads"])
        if args.dry_run:
            print(json.dumps({"plan": cfg["command"], "threads": get_threads(), "config": _plain(cfg)},
                             indent=2, sort_keys=True))
            return 0
        try:
            Path(cfg["out"]).mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError("out", f"cannot create {cfg['out']}: {exc.strerror}")
        t0 = time.perf_counter()
        msg = HANDLERS[cfg["command"]](cfg)
        print(f"{msg} ({time.perf_counter() - t0:.1f} s)")
        return 0
    except ConfigError as exc:
        print(f"heatbem: {exc}", file=sys.stderr)
        return 2
    except (NumericError, ArithmeticError) as exc:
        print(f"heatbem: numeric failure: {exc}", file=sys.stderr)
        return 3
    except HeatBEMError as exc:
        print(f"heatbem: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
