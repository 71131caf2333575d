"""Command-line front end.

Subcommands ``mesh``, ``run``, ``compare`` and ``verify``.  Exit status is 0
on success, 1 on a numerical failure and 2 on a usage error.  Outputs are
plain delimited text so they can be replotted with any tool.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__
from .experiment import (ALGORITHMS, ExperimentConfig, compare_algorithms, run_experiment, trace_table,
                         write_manifest)
from .fem import AssemblyError, CoercivityError, CompatibilityError, SolverError, assemble
from .mesh import MeshError, build_parabola_domain, build_unit_square, load_mesh, save_mesh, validate
from .solvers import DivergenceError

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2

NUMERICAL_ERRORS = (SolverError, DivergenceError, CoercivityError, CompatibilityError, AssemblyError,
                    FloatingPointError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text}")
    return v


def _nonneg(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative: {text}")
    return v


def _geometry_flags(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--parabola", dest="geometry", action="store_const", const="parabola",
                   help="domain y in (x^2 - 1) d < y < 0 (default)")
    g.add_argument("--square", dest="geometry", action="store_const", const="square", help="unit square")
    p.add_argument("--depth", type=_positive, default=None, help="parabola depth d (default 0.5)")
    p.add_argument("--h", type=_positive, default=None, help="target mesh size (default 0.05)")


def _experiment_flags(p):
    _geometry_flags(p)
    p.add_argument("--mesh", default=None, help="load the mesh from a file instead of generating it")
    p.add_argument("--config", default=None, help="JSON file of config values; flags given explicitly win")
    p.add_argument("--f0", type=_nonneg, default=None)
    p.add_argument("--u0", type=_nonneg, default=None)
    p.add_argument("--s", type=_positive, default=None)
    p.add_argument("--p", type=_nonneg, default=None, help="percent noise")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=_positive, default=None, help="discrepancy factor (> 1)")
    p.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p.add_argument("--tol", type=_positive, default=None, help="inner solver relative tolerance")
    p.add_argument("--out-dir", dest="out_dir", default="out")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kmcauchy", description="Cauchy problem for the Laplacian by iterative regularization")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("mesh", help="generate and write a mesh")
    _geometry_flags(p)
    p.add_argument("--s-side", dest="s_side", default="top",
                   help="square only: sides forming S, comma separated (bottom,right,top,left)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="one algorithm on synthetic noisy data")
    _experiment_flags(p)
    p.add_argument("--algorithm", choices=ALGORITHMS, default=None)

    p = sub.add_parser("compare", help="KM and both CG variants on identical data")
    _experiment_flags(p)

    p = sub.add_parser("verify", help="run the operator identity checks")
    _geometry_flags(p)
    p.add_argument("--check", action="append", default=None,
                   help="check name (repeatable); default runs the standard suite")
    p.add_argument("--tol", type=_positive, default=1e-12, help="inner solver relative tolerance")
    p.add_argument("--list", action="store_true", help="list check names and exit")
    return parser


def _resolve_config(args, algorithm=None) -> ExperimentConfig:
    values = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}")
        # a run manifest nests the config
        loaded = loaded.get("config", loaded)
        known = set(ExperimentConfig.__dataclass_fields__)
        unknown = set(loaded) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    flag_map = {"depth": "d", "h": "h", "f0": "f0", "u0": "u0", "s": "s", "p": "p", "seed": "seed",
                "lam": "lam", "max_iter": "max_iter", "tol": "tol"}
    for flag, key in flag_map.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    if algorithm is not None:
        values["algorithm"] = algorithm
    try:
        return ExperimentConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc))


def _system_for(args, config):
    """Mesh from ``--mesh`` or the geometry flags; ``None`` means the config's parabola."""
    if args.mesh is not None:
        path = Path(args.mesh)
        if not path.is_file():
            raise UsageError(f"mesh file not found: {path}")
        try:
            mesh = load_mesh(path)
        except MeshError as exc:
            raise UsageError(f"invalid mesh file: {exc}")
        return assemble(mesh, rtol=config.tol)
    if args.geometry == "square":
        return assemble(build_unit_square(config.h), rtol=config.tol)
    return None


def cmd_mesh(args) -> int:
    try:
        if args.geometry == "square":
            mesh = build_unit_square(args.h or 0.05, s_side=args.s_side)
        else:
            mesh = build_parabola_domain(args.depth or 0.5, args.h or 0.05)
        validate(mesh)
    except (MeshError, ValueError) as exc:
        raise UsageError(str(exc))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_mesh(mesh, out)
    print(f"vertices {mesh.n_vertices} triangles {len(mesh.triangles)} boundary-edges {len(mesh.boundary_edges)}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = _resolve_config(args, algorithm=args.algorithm)
    system = _system_for(args, config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    res = run_experiment(config, system)
    wall = time.perf_counter() - t0
    tag = config.algorithm.replace("-", "_")
    paths = {"history": out / f"history_{tag}.csv", "trace": out / f"trace_{tag}.csv"}
    res.history.write(paths["history"])
    paths["trace"].write_text(trace_table(res.system, res.truth, {tag: res.b_trace}, (tag,)))
    paths["manifest"] = out / "manifest.json"
    write_manifest(paths["manifest"], config, {**paths, **_inputs(args)}, wall,
                   {"metrics": _jsonable(res.metrics)})
    m = res.metrics
    print(f"algorithm {config.algorithm} stopped at iteration {m['iterations']} ({m['status']})")
    print(f"delta {m['delta']:.6e} threshold {config.lam * m['delta']:.6e}")
    print(f"final discrepancy L2(S) {m['final_residual_l2']:.6e} native {m['final_residual_native']:.6e}")
    print(f"truth error L2(B) {m['err_l2_b']:.6e} (relative {m['rel_err_l2_b']:.4f}) "
          f"H1/2_00(B) {m['err_h12_00_b']:.6e}")
    for name, path in paths.items():
        print(f"{name} {path}")
    return EXIT_OK


def _inputs(args):
    inputs = {}
    if getattr(args, "mesh", None):
        inputs["input_mesh"] = args.mesh
    if getattr(args, "config", None):
        inputs["input_config"] = args.config
    return inputs


def _jsonable(metrics):
    return {k: (v if isinstance(v, (str, int)) else float(v)) for k, v in metrics.items()}


def cmd_compare(args) -> int:
    config = _resolve_config(args)
    system = _system_for(args, config)
    t0 = time.perf_counter()
    results, paths = compare_algorithms(config, args.out_dir, system=system)
    wall = time.perf_counter() - t0
    paths["manifest"] = Path(args.out_dir) / "manifest.json"
    summary = {alg: _jsonable(r.metrics) for alg, r in results.items()}
    write_manifest(paths["manifest"], config, {**paths, **_inputs(args)}, wall, {"metrics": summary})
    print("algorithm,iterations,status,final_residual_l2,rel_err_l2_b,oscillation_near_interface")
    for alg, r in results.items():
        m = r.metrics
        print(f"{alg},{m['iterations']},{m['status']},{m['final_residual_l2']:.6e},{m['rel_err_l2_b']:.6f},"
              f"{m['oscillation_near_interface']:.6e}")
    for name, path in paths.items():
        print(f"{name} {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import CHECKS, DEFAULT_SUITE, default_systems, run_check
    if args.list:
        for name in CHECKS:
            print(name)
        return EXIT_OK
    names = args.check or list(DEFAULT_SUITE)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise UsageError(f"unknown check(s): {', '.join(unknown)}; choose from {', '.join(CHECKS)}")
    which = (args.geometry,) if args.geometry else ("square",)
    if args.h is not None or args.depth is not None:
        h = args.h or (0.1 if which[0] == "square" else 0.05)
        mesh = build_unit_square(h) if which[0] == "square" else build_parabola_domain(args.depth or 0.5, h)
        systems = {which[0]: assemble(mesh, rtol=args.tol)}
    else:
        systems = default_systems(rtol=args.tol, which=which)
    ok = True
    for name in names:
        res = run_check(name, systems=systems)
        ok &= res.passed
        print(res.line())
    return EXIT_OK if ok else EXIT_NUMERICAL


COMMANDS = {"mesh": cmd_mesh, "run": cmd_run, "compare": cmd_compare, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        print(f"kmcauchy: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
