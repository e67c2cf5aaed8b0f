"""Command-line interface: ``shadowlab <analyze|shadow|network|measure|zoo>``.

Each run writes into ``<out>/<command>-<config hash>/``. Structured results are JSON
with sorted keys, sequences and histograms are CSV, and wall times go to a
separate ``timings.json`` so that every other file is byte-identical across
repeated runs with the same configuration.

Exit codes: 0 success or certificate, 3 verified negative result, 2 usage
or I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ShadowlabError
from .measures import birkhoff_measure, full_support_pipeline, invariance_defect, recurrent_fraction, total_variation, uniform_measure
from .networks import construct_from_minimal_orbits, construct_from_periodic_chains, minimize_network
from .pseudo import (
    arc_pseudo,
    crossing_pseudo,
    exact_pseudo,
    make_pseudo,
    noisy_orbit,
    read_pseudo,
    verify_pseudotrajectory,
    winding_pseudo,
    write_pseudo,
)
from .recurrence import build_transition_graph, cr_vs_minimal_closure, recurrence_report
from .shadowing import (
    multishadow_search,
    shadow_search,
    subsequence_shadow_search,
    thin_points,
    verify_multishadow,
    verify_shadow,
    verify_subsequence,
)
from .space import build_grid
from .systems import ZOO, _coerce, parse_system, zoo

EXIT_OK, EXIT_USAGE, EXIT_NEGATIVE = 0, 2, 3
OUT_ENV = "SHADOWLAB_OUT"


class UsageError(Exception):
    pass


def _dump(data):
    return json.dumps(data, sort_keys=True, indent=2, default=_default) + "\n"


def _default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.integer, np.floating, np.bool_)):
        return value.item()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def parse_spec(spec):
    """Split ``"name:k=v,k=v"`` into ``(name, params)``."""
    name, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        if not eq:
            raise UsageError(f"malformed item {item!r} in {spec!r}")
        params[key.strip()] = _coerce(value.strip())
    return name.strip(), params


class Run:
    """Output directory, artifact list and stage timer of one invocation."""

    def __init__(self, command, config, out_root):
        self.config = dict(config, command=command)
        digest = hashlib.sha256(_dump(self.config).encode()).hexdigest()[:12]
        self.dir = Path(out_root) / f"{command}-{digest}"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = {}
        self.results = {}
        self.timings = {}

    def stage(self, name):
        run = self

        class _Timer:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[name] = round(time.perf_counter() - self.t, 6)

        return _Timer()

    def write(self, key, name, text):
        (self.dir / name).write_text(text)
        self.files[key] = name

    def write_json(self, key, name, data):
        self.write(key, name, _dump(data))

    def finish(self, exit_code):
        report = {
            "config": self.config,
            "results": self.results,
            "files": self.files,
            "version": __version__,
            "exit_code": exit_code,
        }
        (self.dir / "report.json").write_text(_dump(report))
        (self.dir / "timings.json").write_text(_dump(self.timings))
        print(str(self.dir))
        return exit_code


def _system(args):
    try:
        return parse_system(args.system)
    except ShadowlabError as exc:
        raise UsageError(str(exc)) from None


def _base_config(args):
    return {
        "system": args.system,
        "mesh": args.mesh,
        "d": args.d,
        "eps": args.eps,
        "horizon": args.horizon,
        "seed": args.seed,
    }


def _report(system, args):
    grid = build_grid(system.space, args.mesh)
    return grid, recurrence_report(system, grid, args.d, args.horizon)


def cmd_analyze(args):
    system = _system(args)
    cfg = _base_config(args)
    cfg["closure_tol"] = args.closure_tol
    run = Run("analyze", cfg, args.out)
    with run.stage("recurrence"):
        grid, rep = _report(system, args)
    tol = args.closure_tol if args.closure_tol is not None else 2 * args.eps
    verdict = cr_vs_minimal_closure(rep, grid, tol)
    run.write("recurrence", "recurrence.json", rep.to_json())
    if args.edges:
        graph = build_transition_graph(system, grid, args.d)
        run.write("edges", "edges.txt", graph.edge_text())
    run.results = {
        "verdict": verdict.label,
        "cr_equals_minimal_closure": verdict.equal,
        "predicted_class": "W" if verdict.equal else "not W",
        "closure_tol": tol,
        "worst_cr_cell": verdict.worst_cell,
        "worst_distance": verdict.worst_distance,
        "minimal_outside_cr": verdict.minimal_outside_cr,
        "chain_holds": rep.chain_holds,
        "n_cr": int(len(rep.cr)),
        "n_minimal": int(len(rep.minimal)),
    }
    return run.finish(EXIT_OK)


def _generate(system, spec, args):
    name, p = parse_spec(spec)
    length = int(p.get("length", args.length))
    if name == "noisy":
        return noisy_orbit(system, p.get("x0"), float(p.get("d", args.d)), length, int(p.get("seed", args.seed)))
    if name == "exact":
        return exact_pseudo(system, float(p.get("x0", 0.0)), length)
    if name == "winding":
        return winding_pseudo(system, float(p.get("d", args.d)), int(p.get("turns", 1)), x0=float(p.get("x0", 0.0)))
    if name == "crossing":
        return crossing_pseudo(system, x0=float(p.get("x0", -0.6)), length=int(p.get("length", 1000)))
    if name == "arc":
        return arc_pseudo(system, float(p.get("y", 0.0)), float(p.get("z", 0.5)), float(p.get("delta", args.d)))
    raise UsageError(f"unknown generator {name!r}")


def _load_pseudo(system, args):
    if args.pseudo:
        try:
            pseudo, _ = read_pseudo(args.pseudo)
        except OSError as exc:
            raise UsageError(f"cannot read {args.pseudo}: {exc}") from None
        check = verify_pseudotrajectory(system, pseudo, pseudo.d)
        if not check.passed:
            raise UsageError(f"{args.pseudo}: step error {check.max_error:.3g} exceeds d={pseudo.d:.3g}")
        return make_pseudo(system, pseudo.points, pseudo.d, k_min=pseudo.k_min, provenance=pseudo.provenance,
                           seed=pseudo.seed, meta=pseudo.meta)
    return _generate(system, args.gen or "noisy", args)


def cmd_shadow(args):
    system = _system(args)
    cfg = _base_config(args)
    cfg.update(mode=args.mode, budget=args.budget, length=args.length, gen=args.gen,
               pseudo=str(args.pseudo) if args.pseudo else None, cand_mesh=args.cand_mesh)
    if args.pseudo:
        cfg["pseudo_sha256"] = hashlib.sha256(Path(args.pseudo).read_bytes()).hexdigest()
    run = Run("shadow", cfg, args.out)
    pseudo = _load_pseudo(system, args)
    write_pseudo(pseudo, run.dir / "pseudo.csv", system)
    run.files["pseudo"] = "pseudo.csv"
    cand = build_grid(system.space, args.cand_mesh)
    with run.stage(args.mode):
        if args.mode == "shadow":
            res = shadow_search(system, pseudo, args.eps, cand)
            ok = res.found and verify_shadow(system, pseudo, res)
        elif args.mode == "multishadow":
            res = multishadow_search(system, pseudo, args.eps, cand, args.budget)
            ok = res.found and verify_multishadow(system, pseudo, res)
        else:
            grid, rep = _report(system, args)
            pool = grid.reps[rep.minimal] if len(rep.minimal) else grid.reps
            centers = thin_points(system.space, pool, args.eps / 20)
            res = subsequence_shadow_search(system, pseudo, args.eps, args.horizon_p, centers, bool(len(rep.minimal)))
            ok = verify_subsequence(system, pseudo, res)
    name = "certificate.json" if res.found else "failure.json"
    run.write_json("result", name, res.to_dict())
    run.results = {"found": bool(res.found), "reverified": bool(ok), "kind": res.to_dict()["kind"]}
    return run.finish(EXIT_OK if res.found else EXIT_NEGATIVE)


def cmd_network(args):
    system = _system(args)
    cfg = _base_config(args)
    cfg.update(method=args.method, n_range=args.n_range, restrict_cr=args.restrict_cr,
               minimize=args.minimize, budget=args.budget)
    run = Run("network", cfg, args.out)
    with run.stage("construct"):
        if args.method == "minimal":
            grid, rep = _report(system, args)
            res = construct_from_minimal_orbits(system, args.eps, rep, grid, args.horizon, N_range=args.n_range,
                                                restrict_to_cr=args.restrict_cr)
        else:
            grid = build_grid(system.space, args.mesh)
            graph = build_transition_graph(system, grid, max(args.d - grid.radius, 0.0))
            res = construct_from_periodic_chains(system, args.eps, args.d, graph, args.budget, args.n_range)
    if res.found and args.minimize:
        with run.stage("minimize"):
            res = minimize_network(system, res)
    if res.found:
        run.write_json("network", "network.json", res.to_dict())
        run.write("radius", "radius.csv", res.radius_csv())
        run.results = {"found": True, "size": res.size, "certified_radius": res.certified_radius}
        return run.finish(EXIT_OK)
    run.write_json("failure", "failure.json", res.to_dict())
    run.results = {"found": False, "kind": res.to_dict()["kind"]}
    return run.finish(EXIT_NEGATIVE)


def cmd_measure(args):
    system = _system(args)
    cfg = _base_config(args)
    cfg.update(levels=args.levels, cesaro=args.cesaro, length=args.length, n_range=args.n_range)
    run = Run("measure", cfg, args.out)
    grid = build_grid(system.space, args.mesh)
    with run.stage("recurrence"):
        rep = recurrence_report(system, grid, args.d, args.horizon)
    eps_list = [2.0 ** -m for m in range(1, args.levels + 1)]
    nets = []
    failure = None
    with run.stage("networks"):
        for e in eps_list:
            res = construct_from_minimal_orbits(system, e, rep, grid, args.horizon, N_range=args.n_range)
            if not res.found:
                failure = dict(res.to_dict(), level_eps=e)
                break
            nets.append(res.points)
    rows = ["d,length,fraction"]
    with run.stage("recurrent_fraction"):
        for d in (args.d, 10 * args.d):
            for n in (args.length // 10, args.length):
                ps = noisy_orbit(system, None, d, n, args.seed)
                frac = recurrent_fraction(system, ps, args.eps, grid.reps[rep.recurrent])
                rows.append(f"{d!r},{n},{frac!r}")
    run.write("recurrent_fraction", "recurrent_fraction.csv", "\n".join(rows) + "\n")
    if failure is not None:
        run.write_json("failure", "failure.json", failure)
        run.results = {"found": False, "kind": failure["kind"]}
        return run.finish(EXIT_NEGATIVE)
    with run.stage("pipeline"):
        mu, _ = full_support_pipeline(system, grid, eps_list, nets, args.cesaro)
    run.write("measure", "measure.csv", mu.to_csv())
    defect = invariance_defect(system, mu)
    run.results = {
        "found": True,
        "support_fraction": len(mu.support) / grid.n_cells,
        "invariance_defect": defect,
        "tv_to_uniform": total_variation(mu, uniform_measure(grid)),
        "network_sizes": [int(len(a)) for a in nets],
    }
    run.write_json("measure_meta", "measure.json", dict(mu.to_dict(), **run.results))
    return run.finish(EXIT_OK)


def cmd_zoo(args):
    rows = []
    for name in sorted(ZOO):
        s = zoo(name)
        rows.append({"name": name, "label": s.label, "space": s.space.to_dict(), "invertible": s.invertible,
                     "fixed_points": list(s.fixed_points)})
    sys.stdout.write(_dump(rows))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="shadowlab", description="Weak shadowing experiments on a system zoo.")
    parser.add_argument("--version", action="version", version=f"shadowlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--system", required=True, help="zoo selector NAME[:k=v,...]")
        p.add_argument("--mesh", type=float, default=1e-3)
        p.add_argument("--d", type=float, default=1e-3)
        p.add_argument("--eps", type=float, default=0.1)
        p.add_argument("--horizon", type=int, default=10_000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=os.environ.get(OUT_ENV, "out"))

    p = sub.add_parser("analyze", help="recurrence report and CR versus closure of minimal cells")
    common(p)
    p.add_argument("--closure-tol", type=float, default=None, help="default 2*eps")
    p.add_argument("--edges", action="store_true", help="also dump the transition graph")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("shadow", help="shadowing, multishadowing or subsequence certificates")
    common(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--pseudo", type=Path)
    src.add_argument("--gen", help="noisy|exact|winding|crossing|arc[:k=v,...]")
    p.add_argument("--mode", choices=["shadow", "multishadow", "subsequence"], default="shadow")
    p.add_argument("--budget", type=int, default=10)
    p.add_argument("--length", type=int, default=1000)
    p.add_argument("--cand-mesh", type=float, default=0.01)
    p.add_argument("--horizon-p", type=int, default=100)
    p.set_defaults(func=cmd_shadow)

    p = sub.add_parser("network", help="almost-invariant eps-networks")
    common(p)
    p.add_argument("--method", choices=["minimal", "chains"], default="minimal")
    p.add_argument("--n-range", type=int, default=10_000)
    p.add_argument("--restrict-cr", action="store_true")
    p.add_argument("--minimize", action="store_true")
    p.add_argument("--budget", type=int, default=10)
    p.set_defaults(func=cmd_network)

    p = sub.add_parser("measure", help="full-support invariant measure and recurrent fractions")
    common(p)
    p.add_argument("--levels", type=int, default=6)
    p.add_argument("--cesaro", type=int, default=10_000)
    p.add_argument("--length", type=int, default=10_000)
    p.add_argument("--n-range", type=int, default=1000)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("zoo", help="list the built-in systems")
    p.set_defaults(func=cmd_zoo)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"shadowlab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ShadowlabError, OSError) as exc:
        print(f"shadowlab: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
