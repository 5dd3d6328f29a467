"""Command line interface.

Subcommands: ``nodes``, ``weights``, ``integrate``, ``study`` and
``domains``. Exit status is 0 on success, 1 on usage errors and 2 when a
numerical step fails.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from ..geometry import GeometryError, builtin_names, make_builtin
from ..mfd import Operator
from ..nodegen import NodeGenError, SampleMode, advancing_front, read_nodes, rejection_sample, write_nodes
from ..quadrature import (
    ConstraintSpec,
    Method,
    QuadratureError,
    compute_weights,
    parse_constraint,
    read_weights,
    write_weights,
)
from .functions import constant, franke, fundamental, runge
from .reference import ReferenceAccuracyError, ReferenceUnavailable, reference_integral
from .study import ConfigError, parse_config, report_rows, run_study, with_overrides, CSV_COLUMNS

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2

GENERATORS = ("af", "halton", "grid", "random")
FUNCTION_NAMES = ("runge", "franke", "constant", "fundamental")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad input; usage errors here are 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.replace(",", " ").split())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _domain(name: str):
    try:
        return make_builtin(name)
    except ValueError:
        raise UsageError(f"unknown domain {name!r}; choose from {', '.join(builtin_names())}") from None


def _generate(d, args):
    if args.generator == "af":
        return advancing_front(d, args.h, args.seed, closed=not args.open)
    mode = {"halton": SampleMode.HALTON, "grid": SampleMode.GRID, "random": SampleMode.RANDOM}[args.generator]
    return rejection_sample(d, args.h, mode, args.seed, closed=not args.open)


def _out(path):
    return sys.stdout if path in (None, "-") else path


def cmd_domains(args) -> int:
    for name in builtin_names():
        print(name)
    return EXIT_OK


def cmd_nodes(args) -> int:
    d = _domain(args.domain)
    ns = _generate(d, args)
    write_nodes(ns, _out(args.out))
    logging.info("%s: N_Y=%d N_Z=%d", d.name, ns.n_y, ns.n_z)
    return EXIT_OK


def cmd_weights(args) -> int:
    d = _domain(args.domain)
    if args.nodes:
        ns = read_nodes(args.nodes)
    else:
        if args.h is None:
            raise UsageError("either --nodes or --h is required")
        ns = _generate(d, args)
    spec = ConstraintSpec(parse_constraint(args.constraint), np.asarray(args.x0) if args.x0 else None)
    rule = compute_weights(
        d, ns, Method(args.method.upper()), args.q, spec, solver=args.solver,
        operator=Operator(args.operator.capitalize()),
    )
    write_weights(rule, _out(args.out))
    logging.info("residual=%.3g K_w=%.4g K_v=%.4g", rule.residual_inf, rule.K_w, rule.K_v)
    return EXIT_OK


def _test_function(d, args):
    name = args.function
    if name == "runge":
        return runge(args.x_r if args.x_r else d.runge_center)
    if name == "franke":
        return franke(d.dim)
    if name == "constant":
        return constant(d.dim)
    x0 = args.x_r if args.x_r else d.x0
    if x0 is None:
        raise UsageError(f"{d.name} has no default center; pass --x-r")
    return fundamental(x0)


def _boundary_normals(d, Z, nodes_path):
    if nodes_path:
        ns = read_nodes(nodes_path)
        if len(ns.boundary) != len(Z) or not np.allclose(ns.boundary, Z, rtol=0, atol=1e-14):
            raise UsageError("--nodes does not match the boundary nodes of the weight file")
        return ns.normals
    if (d.corners is not None and len(d.corners)) or d.faces:
        raise UsageError(f"{d.name} has sharp features; pass --nodes for the boundary normals")
    g = d.grad_phi(Z)
    return g / np.linalg.norm(g, axis=1)[:, None]


def cmd_integrate(args) -> int:
    d = _domain(args.domain)
    meta, Y, w, Z, v = read_weights(args.weights)
    if (len(Y) and Y.shape[1] != d.dim) or (len(Z) and Z.shape[1] != d.dim):
        raise UsageError("the weight file does not match the domain dimension")
    fn = _test_function(d, args)
    target = args.target
    if target == "interior":
        if fn.needs_normals:
            raise UsageError("the fundamental-solution integrand lives on the boundary")
        value = float(w @ fn(Y))
    else:
        nrm = _boundary_normals(d, Z, args.nodes) if fn.needs_normals else None
        value = float(v @ fn(Z, nrm))
    if fn.needs_normals:
        ref = 1.0
    else:
        try:
            ref = reference_integral(d, fn, target)
        except ReferenceUnavailable:
            ref = None
    print(f"value={value:.17g}")
    if ref is not None:
        print(f"reference={ref:.17g}")
        print(f"relative_error={abs(value - ref) / abs(ref):.6e}")
    return EXIT_OK


def cmd_study(args) -> int:
    try:
        with open(args.config) as fh:
            cfg = parse_config(fh.read())
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    if args.out:
        cfg = with_overrides(cfg, out=args.out)
    report = run_study(cfg)
    if not cfg.out:
        print(",".join(CSV_COLUMNS))
        for row in report_rows(report):
            print(",".join(row))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mfquad", description="Moment-free quadrature weights on scattered nodes.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("domains", help="list the built-in domains")
    s.set_defaults(func=cmd_domains)

    def node_args(s, h_required):
        s.add_argument("--domain", required=True)
        s.add_argument("--h", type=float, required=h_required)
        s.add_argument("--seed", type=int, default=1)
        s.add_argument("--generator", choices=GENERATORS, default="af")
        s.add_argument("--open", action="store_true", help="leave boundary nodes out of Y")

    s = sub.add_parser("nodes", help="generate a node set")
    node_args(s, True)
    s.add_argument("--out", help="output CSV (default stdout)")
    s.set_defaults(func=cmd_nodes)

    s = sub.add_parser("weights", help="compute quadrature weights")
    node_args(s, False)
    s.add_argument("--nodes", help="read nodes from this CSV instead of generating them")
    s.add_argument("--method", choices=("mfd", "bsp", "MFD", "BSP"), default="mfd")
    s.add_argument("--q", type=int, required=True)
    s.add_argument("--constraint", default="BoundaryConstant")
    s.add_argument("--x0", type=_floats, help="fundamental-solution center")
    s.add_argument("--solver", choices=("auto", "qr", "chol"), default="auto")
    s.add_argument("--operator", choices=("divergence", "laplacian"), default="divergence")
    s.add_argument("--out", help="output CSV (default stdout)")
    s.set_defaults(func=cmd_weights)

    s = sub.add_parser("integrate", help="apply a weight file to a test function")
    s.add_argument("--domain", required=True)
    s.add_argument("--weights", required=True)
    s.add_argument("--function", choices=FUNCTION_NAMES, default="runge")
    s.add_argument("--target", choices=("interior", "boundary"), default="interior")
    s.add_argument("--x-r", type=_floats, help="Runge or fundamental-solution center")
    s.add_argument("--nodes", help="node CSV supplying boundary normals")
    s.set_defaults(func=cmd_integrate)

    s = sub.add_parser("study", help="run a convergence study from a key=value config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="study CSV (overrides the config)")
    s.set_defaults(func=cmd_study)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, FileNotFoundError) as exc:
        print(f"mfquad: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QuadratureError, NodeGenError, GeometryError, ReferenceAccuracyError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"mfquad: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"mfquad: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
