"""Command-line entry point.

Exit codes: 0 success, 1 a verification failed, 2 bad usage or input.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import warnings

import numpy as np

from . import __version__
from .foliation import trace_trajectory
from .maps import hopf, ks_area, ks_energy, pullback_metric, tree_map
from .mesh import build_mesh
from .plateau import PlateauProblem, compare_with_projection, solve
from .qd import PolynomialQD, l1_norm
from .svg import render_svg
from .tree import ENERGY_CONVENTION, ProductTree, TreePoint, build_tree
from .verify import (MinimalPair, VariationSpec, approximate_by_polynomial, example_a, nmi_trial,
                     stability_second_variation, verify_reich_strebel)

log = logging.getLogger("qdtrees")


class UsageError(Exception):
    pass


# config and provenance ---------------------------------------------------------

def read_config(path: str) -> dict:
    """Plain ``key = value`` lines; '#' starts a comment; keys use dashes or underscores."""
    out = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


def provenance(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "csv", "config")}
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return {
        "tool_version": __version__,
        "config_hash": hashlib.sha256(blob).hexdigest()[:16],
        "seed": getattr(args, "seed", None),
        "energy_convention": ENERGY_CONVENTION,
    }


def _c(z: complex) -> list:
    return [float(z.real), float(z.imag)]


class Output:
    def __init__(self, args):
        self.args = args
        self.prov = provenance(args)
        self.buf = io.StringIO()

    def record(self, rec: dict):
        rec = dict(rec)
        rec["provenance"] = self.prov
        self.buf.write(json.dumps(rec, sort_keys=True, default=_json_default) + "\n")

    def close(self):
        text = self.buf.getvalue()
        if self.args.out and self.args.out != "-":
            with open(self.args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)


def _json_default(o):
    if isinstance(o, complex):
        return _c(o)
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _phi(args) -> PolynomialQD:
    if not getattr(args, "phi", None):
        raise UsageError("--phi is required")
    try:
        phi = PolynomialQD.parse(args.phi)
    except Exception as exc:
        raise UsageError(f"cannot parse --phi {args.phi!r}: {exc}") from exc
    if phi.is_zero:
        raise UsageError("phi must be nonzero")
    return phi


def _point(s: str) -> complex:
    try:
        x, y = (float(t) for t in s.split(","))
    except ValueError as exc:
        raise UsageError(f"expected a point x,y, got {s!r}") from exc
    return complex(x, y)


def _positive(name, x):
    if not (x > 0):
        raise UsageError(f"{name} must be positive")
    return x


# subcommands ----------------------------------------------------------------------

def cmd_trace(args, out: Output) -> int:
    phi = _phi(args)
    prong = None
    if args.prong:
        zid, j = (int(t) for t in args.prong.split(","))
        prong = (zid, j)
    seg = trace_trajectory(phi, _point(args.z0) if args.z0 else 0j, args.kind, _positive("--step", args.step),
                           args.clip_radius, prong=prong)
    out.record({"trajectory": seg.to_json(), "arclength": seg.arclength()})
    return 0


def cmd_tree(args, out: Output) -> int:
    phi = _phi(args)
    kinds = ("vertical", "horizontal") if args.kind == "both" else (args.kind,)
    for kind in kinds:
        t = build_tree(phi, kind, args.clip_radius)
        rec = {"kind": kind, "tree": t.to_json(), "n_rays": t.n_rays, "tree_identity": t.satisfies_tree_identity()}
        if args.graph and t.graph is not None:
            rec["critical_graph"] = t.graph.to_json()
        out.record(rec)
    return 0


def cmd_project(args, out: Output) -> int:
    phi = _phi(args)
    pts = [_point(s) for s in args.points.split(";") if s.strip()]
    if not pts:
        raise UsageError("--points is empty")
    t = build_tree(phi, args.kind)
    e, o = t.project_many(np.array(pts))
    for z, ei, oi in zip(pts, e, o):
        v = t.point_vertex(TreePoint(int(ei), float(oi)))
        out.record({"z": _c(z), "edge": int(ei), "offset": float(oi), "kind": args.kind, "vertex": v})
    return 0


def cmd_energy(args, out: Output) -> int:
    phi = _phi(args)
    mesh = build_mesh(_positive("--radius", args.radius), _positive("--mesh-h", args.mesh_h))
    t = build_tree(phi, args.kind)
    m = tree_map(mesh, t)
    E = ks_energy(m, mesh, args.mask)
    A = ks_area(m, mesh, args.mask)
    hp = hopf(pullback_metric(m, mesh))
    ref_hopf = phi(mesh.centroids) * (1 if args.kind == "vertical" else -1)
    ok = np.abs(ref_hopf) > 0
    rel = float(np.mean(np.abs(hp[ok] - ref_hopf[ok]) / np.abs(ref_hopf[ok]))) if np.any(ok) else 0.0
    ref = 2 * l1_norm(phi, args.radius) if args.mask is None else None
    out.record({"kind": args.kind, "energy": E, "area": A, "reference_2_l1": ref,
                "relative_gap": (E - ref) / ref if ref else None, "hopf_mean_relative_error": rel,
                "n_triangles": mesh.n_triangles})
    return 0


def cmd_plateau(args, out: Output) -> int:
    phi = _phi(args)
    mesh = build_mesh(_positive("--radius", args.radius), _positive("--mesh-h", args.mesh_h))
    prod = ProductTree(phi)
    prob = PlateauProblem.from_projection(mesh, prod, tolerance=args.tol, max_sweeps=args.max_sweeps)
    state = solve(prob, initial=args.init, seed=args.seed)
    cmp = compare_with_projection(state, phi, prob)
    out.record({"sweeps": state.sweeps, "converged": state.converged, "energy": state.energy,
                "factor_ks_energies": cmp.factor_energies, "reference_per_factor": cmp.reference_energy,
                "energy_gap_per_factor": cmp.energy_gap, "sup_distance_to_projection": cmp.sup_distance,
                "mean_distance_to_projection": cmp.mean_distance,
                "values": [[v[0].tolist(), v[1].tolist()] for v in state.values] if args.dump_values else None})
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fh.write("# " + json.dumps(out.prov, sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow(["sweep", "energy", "vertical", "horizontal"])
            for i, (E, fe) in enumerate(zip(state.energy_history, state.factor_energies)):
                w.writerow([i, repr(E), *(repr(x) for x in fe)])
    monotone = all(b <= a * (1 + 1e-12) + 1e-15 for a, b in zip(state.energy_history, state.energy_history[1:]))
    return 0 if monotone else 1


def cmd_verify_nmi(args, out: Output) -> int:
    mesh = build_mesh(1.0, _positive("--mesh-h", args.mesh_h))
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    failed = 0
    for i in range(args.trials):
        r = nmi_trial(args.seed * 100003 + i, mesh, args.deg)
        ok = r.margin >= -1e-9 * (1 + r.rhs)
        failed += not ok
        out.record({**r.to_json(), "trial": i, "pass": ok})
    return 1 if failed else 0


def cmd_verify_rs(args, out: Output) -> int:
    phi = _phi(args) if args.phi else PolynomialQD((0, 1))
    levels = tuple(float(x) for x in args.levels.split(","))
    tab = verify_reich_strebel(phi, levels=levels)
    ok = tab.errors[-1] <= args.max_error and (tab.slope is None or tab.slope >= args.min_slope)
    out.record({**tab.to_json(), "pass": ok})
    return 0 if ok else 1


def cmd_example_a(args, out: Output) -> int:
    try:
        L, H = (float(x) for x in args.box.lower().split("x"))
    except ValueError as exc:
        raise UsageError(f"--box must look like 8x8, got {args.box!r}") from exc
    if args.k == 1:
        raise UsageError("k must differ from 1")
    rep = example_a(_positive("--k", args.k), (L, H))
    ok = rep.hopf_sum == 0 and rep.boundary_discrepancy == 0 and rep.interior_discrepancy[0] != [0.0, 0.0]
    out.record({**rep.to_json(), "pass": ok})
    return 0 if ok else 1


def cmd_stability(args, out: Output) -> int:
    if args.example_a_k is not None:
        if args.example_a_k == 1 or args.example_a_k <= 0:
            raise UsageError("k must be positive and differ from 1")
        pair = MinimalPair.example_a(args.example_a_k)
        box = (-1.0, 1.0, 1.0, 2.0)
    else:
        pair = MinimalPair.projection(_phi(args))
        box = (-0.6, 0.6, -0.6, 0.6)
    failed = 0
    for i in range(args.trials):
        v = VariationSpec.random(args.seed * 100003 + i, center_box=box)
        r = stability_second_variation(pair, v)
        ok = r.minimal and r.stable
        failed += not ok
        out.record({"pair": pair.name, "trial": i, "first": r.first, "second": r.second, "scale": r.scale,
                    "center": _c(v.center), "radius": v.radius, "pass": ok})
    return 1 if failed else 0


def cmd_approx(args, out: Output) -> int:
    if args.pole:
        p0 = _point(args.pole)
        if abs(p0) <= 1:
            raise UsageError("the pole must lie outside the closed unit disk")

        def target(z):
            return 1.0 / (z - p0)
    else:
        target = _phi(args)
    if args.degree < 0:
        raise UsageError("--degree must be non-negative")
    p, err = approximate_by_polynomial(target, args.degree)
    out.record({"degree": args.degree, "coeffs": [_c(c) for c in p.coeffs], "l1_error": err})
    return 0


def cmd_render(args, out: Output) -> int:
    phi = _phi(args)
    svg = render_svg(build_tree(phi, args.kind), args.what, args.leaves)
    svg = svg.replace("\n", "\n<!-- " + json.dumps(out.prov, sort_keys=True) + " -->\n", 1)
    if args.out and args.out != "-":
        with open(args.out, "w") as fh:
            fh.write(svg)
    else:
        sys.stdout.write(svg)
    out.buf = io.StringIO()
    out.args.out = None
    return 0


# parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qdtrees", description="Foliations, leaf trees and harmonic-map checks "
                                "for polynomial quadratic differentials.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_, phi=True, kind=True):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="key = value file; command-line flags win")
        s.add_argument("--out", default=None, help="output path (default stdout)")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("-v", "--verbose", action="store_true")
        if phi:
            s.add_argument("--phi", help='coefficients "re,im;re,im;..." from the constant term up')
        if kind:
            s.add_argument("--kind", choices=("vertical", "horizontal"), default="vertical")
        s.set_defaults(func=func)
        return s

    s = add("trace", cmd_trace, "trace one leaf")
    s.add_argument("--z0", help="start point x,y")
    s.add_argument("--prong", help="zero id,prong index for a separatrix")
    s.add_argument("--step", type=float, default=0.05)
    s.add_argument("--clip-radius", type=float, default=None)

    s = add("tree", cmd_tree, "build the leaf tree", kind=False)
    s.add_argument("--kind", choices=("vertical", "horizontal", "both"), default="vertical")
    s.add_argument("--clip-radius", type=float, default=None)
    s.add_argument("--graph", action="store_true", help="include the critical graph")

    s = add("project", cmd_project, "project points to the leaf tree")
    s.add_argument("--points", required=True, help='"x,y;x,y;..."')

    s = add("energy", cmd_energy, "energy, area and Hopf differential of the sampled projection")
    s.add_argument("--radius", type=float, default=1.0)
    s.add_argument("--mesh-h", type=float, default=0.05)
    s.add_argument("--mask", default=None, help="subdomain, e.g. disk:0.5")

    s = add("plateau", cmd_plateau, "discrete Plateau problem into the product of the two trees", kind=False)
    s.add_argument("--radius", type=float, default=1.0)
    s.add_argument("--mesh-h", type=float, default=0.1)
    s.add_argument("--tol", type=float, default=None)
    s.add_argument("--max-sweeps", type=int, default=5000)
    s.add_argument("--init", choices=("projection", "boundary", "random"), default="projection")
    s.add_argument("--csv", default=None, help="energy history CSV path")
    s.add_argument("--dump-values", action="store_true")

    s = add("verify-nmi", cmd_verify_nmi, "random trials of the inequality", phi=False, kind=False)
    s.add_argument("--trials", type=int, default=10)
    s.add_argument("--deg", type=int, default=6)
    s.add_argument("--mesh-h", type=float, default=0.05)

    s = add("verify-rs", cmd_verify_rs, "refinement study of the energy-change formula", kind=False)
    s.add_argument("--levels", default="0.01,0.005,0.0025")
    s.add_argument("--max-error", type=float, default=1e-3)
    s.add_argument("--min-slope", type=float, default=1.8)

    s = add("example-a", cmd_example_a, "two minimal diffeomorphisms with equal boundary values",
            phi=False, kind=False)
    s.add_argument("--k", type=float, required=True)
    s.add_argument("--box", default="8x8")

    s = add("stability", cmd_stability, "second variation under compact deformations", kind=False)
    s.add_argument("--example-a-k", type=float, default=None)
    s.add_argument("--trials", type=int, default=20)

    s = add("approx", cmd_approx, "Taylor approximation and its L1 error", kind=False)
    s.add_argument("--pole", default=None, help="approximate 1/(z - pole) instead of --phi")
    s.add_argument("--degree", type=int, required=True)

    s = add("render", cmd_render, "SVG of the foliation and tree")
    s.add_argument("--what", choices=("foliation", "tree", "both"), default="both")
    s.add_argument("--leaves", type=int, default=15)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cfg = read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    for k, v in cfg.items():
        if k not in known or k in ("config", "help"):
            raise UsageError(f"unknown config key {k!r} for {args.command}")
        a = known[k]
        if isinstance(a, argparse._StoreTrueAction):
            v = v.lower() in ("1", "true", "yes", "on")
        elif a.type is not None:
            v = a.type(v)
        sub.set_defaults(**{k: v})
    return parser.parse_args(argv)


def run(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, OSError, ValueError) as exc:
        print(f"qdtrees: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Output(args)
    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore")
            code = args.func(args, out)
    except UsageError as exc:
        print(f"qdtrees: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"qdtrees: {exc}", file=sys.stderr)
        return 2
    out.close()
    return code


def main() -> None:
    sys.exit(run())
