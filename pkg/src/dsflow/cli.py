"""Command-line interface: ``run``, ``verify`` and ``mesh-info``."""

import argparse
import sys
import time

import numpy as np

from .errors import DsflowError, UsageError
from .impes import PRESETS, Simulation, load_config

SUITES = ("elements", "patch", "convergence")

# EG-DS_r global dof count a n^2 + b n + 1 on an n x n mesh
TABLE_EG_DS = {1: (2, 2), 2: (4, 4), 3: (6, 6), 4: (9, 8)}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser():
    p = _Parser(prog="dsflow", description="DS/EG two-phase flow on quadrilateral meshes")
    sub = p.add_subparsers(dest="command")
    r = sub.add_parser("run", help="run a simulation")
    r.add_argument("--config", help="flat key = value config file")
    r.add_argument("--preset", help=f"scenario preset ({', '.join(sorted(PRESETS))})")
    r.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key; may be repeated")
    r.add_argument("--output", help="output directory (overrides output.dir)")
    r.add_argument("--restart", help="restart file written by --save-state")
    r.add_argument("--save-state", help="write the final state to this .npz file")
    r.add_argument("--quiet", action="store_true")
    v = sub.add_parser("verify", help="run the element, patch and convergence checks")
    v.add_argument("--suite", choices=SUITES + ("all",), default="all")
    m = sub.add_parser("mesh-info", help="print mesh statistics")
    m.add_argument("--mesh", required=True, help="mesh file in the plain-text format")
    return p


# ---------------------------------------------------------------------------
# verify suites
# ---------------------------------------------------------------------------

def _suite_elements():
    from .mesh import generate_distorted_grid
    from .serendipity import ElementBasis, eg_raw_dimension, local_dimension

    rows = []
    mesh = generate_distorted_grid(4, 4, distortion_fraction=0.2, rng_seed=1)
    for r in range(1, 6):
        basis = ElementBasis(mesh.coords, r)
        vals, _ = basis.tabulate(basis.node_ref)
        kron = float(np.abs(vals - np.eye(basis.dim)).max())
        ok = kron <= 1e-10 and basis.dim == local_dimension(r)
        rows.append((f"DS_{r} unisolvence", f"dim {basis.dim}, Kronecker err {kron:.1e}", ok))
    for r, (a, b) in TABLE_EG_DS.items():
        n = 8
        got = eg_raw_dimension(n, r)
        rows.append((f"EG-DS_{r} dofs on {n}x{n}", f"{got}", got == a * n * n + b * n + 1))
    return rows


def _suite_patch():
    from .flow import FlowSolver, dirichlet
    from .mesh import generate_distorted_grid, map_points
    from .mixed import FULL, REDUCED

    rows = []
    mesh = generate_distorted_grid(6, 5, distortion_fraction=0.25, rng_seed=3)

    def phi(x):
        return 1.0 + 2.0 * x[..., 0] - 0.5 * x[..., 1]

    for variant in (FULL, REDUCED):
        solver = FlowSolver(mesh, {t: dirichlet(phi) for t in mesh.boundary_tags}, 1, variant)
        sol = solver.run()
        pts = solver.disc.rule.points
        uh = np.einsum("cqmd,cm->cqd", solver.disc.vals, sol.u)
        err_u = float(np.abs(uh - np.array([-2.0, 0.5])).max())
        rows.append((f"AC_1 {variant} linear patch u", f"max u error {err_u:.1e}", err_u <= 1e-11))
        if variant == FULL:
            # the reduced family carries only P_0 pressures
            pv, _ = solver.space.tabulate_pressure(pts)
            ph = np.einsum("cqm,cm->cq", pv, sol.p)
            err = float(np.abs(ph - phi(map_points(mesh.coords, pts))).max())
            rows.append((f"AC_1 {variant} linear patch p", f"max p error {err:.1e}", err <= 1e-11))
    return rows


def _suite_convergence():
    from .convergence import convergence_study

    rows = []
    t = convergence_study("mixed", {"s": 1, "variant": "full"}, (8, 16, 32))
    for k in ("u", "div u", "p"):
        o = t.final_order(k)
        rows.append((f"AC_1 full {k} order", f"{o:.2f}", abs(o - 2.0) <= 0.2))
    for r in (2, 3):
        t = convergence_study("interpolation", {"r": r}, (8, 16, 32))
        o = t.final_order("u")
        rows.append((f"DS_{r} interpolation order", f"{o:.2f}", abs(o - (r + 1)) <= 0.2))
    return rows


def verify(suite="all", out=sys.stdout):
    names = SUITES if suite == "all" else (suite,)
    funcs = {"elements": _suite_elements, "patch": _suite_patch, "convergence": _suite_convergence}
    rows = []
    for name in names:
        rows += [(name,) + row for row in funcs[name]()]
    width = max(len(r[1]) for r in rows)
    print(f"{'suite':<12} {'check':<{width}}  {'result':<30} status", file=out)
    for suite_name, check, value, ok in rows:
        print(f"{suite_name:<12} {check:<{width}}  {value:<30} {'PASS' if ok else 'FAIL'}", file=out)
    return all(r[3] for r in rows)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _mesh_info(path, out):
    from .mesh import read_mesh
    info = read_mesh(path).summary()
    for k, v in info.items():
        print(f"{k:>16}: {v}", file=out)


def _run(args, out):
    overrides = list(args.override)
    if args.output:
        overrides.append(f"output.dir={args.output}")
    cfg = load_config(args.config, args.preset, overrides)
    t0 = time.perf_counter()
    sim = Simulation(cfg)
    if args.restart:
        sim.load_state(args.restart)
    result = sim.run(append=args.restart is not None)
    if args.save_state:
        sim.save_state(args.save_state)
    if not args.quiet:
        last = result.rows[-1] if result.rows else None
        print(f"scenario {cfg['scenario']}: {sim.mesh.n_cells} cells, {sim.eg.ndof} saturation dofs, "
              f"dt {sim.dt:.6g}, {len(result.rows)} steps in {time.perf_counter() - t0:.1f} s", file=out)
        if last is not None:
            print(f"final t {last['time']:.6g}, S in [{last['S_min']:.4f}, {last['S_max']:.4f}], "
                  f"cell balance {last['cell_balance']:.2e}", file=out)
        if result.files:
            print(f"wrote {len(result.files)} snapshots to {result.files[0].parent}", file=out)
    return result


def main(argv=None, out=None, err=None):
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    try:
        args = _parser().parse_args(argv)
        if args.command is None:
            raise UsageError("missing command; use run, verify or mesh-info")
        if args.command == "run":
            if not args.config and not args.preset:
                raise UsageError("run needs --config or --preset")
            _run(args, out)
            return 0
        if args.command == "verify":
            return 0 if verify(args.suite, out) else 1
        _mesh_info(args.mesh, out)
        return 0
    except (DsflowError, OSError) as exc:
        print(f"dsflow: error: {exc}", file=err)
        return 2


# re-exported for tests that drive the CLI by name
cli = main
