"""Manufactured-solution and interpolation convergence studies.

Each study runs on a sequence of independently distorted n x n grids with n
doubling, so the meshes stay genuinely non-affine under refinement. Observed
orders are ``log2(e_i / e_{i+1})``.
"""

from dataclasses import dataclass, field

import numpy as np

from .flow import FlowSolver, dirichlet
from .mesh import generate_distorted_grid, jacobians, map_points
from .mixed import FULL
from .quadrature import quadrature_rule
from .serendipity import DSSpace


@dataclass
class ConvergenceTable:
    """Errors per refinement and the observed orders between them."""

    label: str
    sizes: list
    h: list
    errors: dict = field(default_factory=dict)

    def orders(self, name):
        e = np.asarray(self.errors[name])
        return np.log2(e[:-1] / e[1:])

    def final_order(self, name):
        return float(self.orders(name)[-1])

    def format(self):
        names = list(self.errors)
        head = f"{'n':>5} {'h':>10} " + " ".join(f"{k:>12} {'rate':>6}" for k in names)
        lines = [self.label, head]
        for i, n in enumerate(self.sizes):
            row = f"{n:>5} {self.h[i]:>10.4e} "
            for k in names:
                rate = "" if i == 0 else f"{self.orders(k)[i - 1]:6.2f}"
                row += f"{self.errors[k][i]:>12.4e} {rate:>6} "
            lines.append(row.rstrip())
        return "\n".join(lines)


def study_meshes(sizes, distortion=0.2, seed=0):
    return [generate_distorted_grid(n, n, distortion_fraction=distortion, rng_seed=seed + i)
            for i, n in enumerate(sizes)]


def _l2(mesh, rule, err):
    _, det = jacobians(mesh.coords, rule.points)
    return float(np.sqrt(np.sum(det * rule.weights * err)))


# ---------------------------------------------------------------------------
# manufactured solutions
# ---------------------------------------------------------------------------

class SmoothPotential:
    """Phi = sin(pi x) sin(pi y) + x with K = I, so u = -grad Phi, q = -lap Phi."""

    @staticmethod
    def phi(x):
        return np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1]) + x[..., 0]

    @staticmethod
    def velocity(x):
        sx, cx = np.sin(np.pi * x[..., 0]), np.cos(np.pi * x[..., 0])
        sy, cy = np.sin(np.pi * x[..., 1]), np.cos(np.pi * x[..., 1])
        return -np.stack([np.pi * cx * sy + 1.0, np.pi * sx * cy], axis=-1)

    @staticmethod
    def source(x):
        return 2.0 * np.pi**2 * np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])


def mixed_errors(mesh, s=1, variant=FULL, problem=SmoothPotential, quad_order=None):
    """L2 errors of u, div u and p for one mesh."""
    bc = {t: dirichlet(problem.phi) for t in mesh.boundary_tags}
    solver = FlowSolver(mesh, bc, s, variant, quad_order=quad_order)
    sol = solver.run(q_t=problem.source)
    disc = solver.disc
    rule = quadrature_rule(2 * s + 8)
    vals, divs = disc.space.tabulate(rule.points)
    pvals, _ = disc.space.tabulate_pressure(rule.points)
    x = map_points(mesh.coords, rule.points)
    uh = np.einsum("cqmd,cm->cqd", vals, sol.u)
    dh = np.einsum("cqm,cm->cq", divs, sol.u)
    ph = np.einsum("cqm,cm->cq", pvals, sol.p)
    return {
        "u": _l2(mesh, rule, np.sum((uh - problem.velocity(x)) ** 2, axis=-1)),
        "div u": _l2(mesh, rule, (dh - problem.source(x)) ** 2),
        "p": _l2(mesh, rule, (ph - problem.phi(x)) ** 2),
    }


def interpolation_error(mesh, r, family="direct", func=None):
    """L2 error of the nodal DS_r (or mapped serendipity) interpolant."""
    if func is None:
        def func(x):
            return np.sin(np.pi * x[..., 0]) * np.exp(x[..., 1])
    space = DSSpace(mesh, r, family)
    coef = space.interpolate(func)
    rule = quadrature_rule(2 * r + 8)
    vals, _ = space.tabulate(rule.points)
    uh = np.einsum("cqk,ck->cq", vals, coef[space.dofmap])
    x = map_points(mesh.coords, rule.points)
    return _l2(mesh, rule, (uh - func(x)) ** 2)


def convergence_study(problem, element, refinements=(4, 8, 16, 32), distortion=0.2, seed=0):
    """Run a study.

    Parameters
    ----------
    problem : {"mixed", "interpolation"}
    element : dict
        ``{"s": 1, "variant": "full"}`` for mixed, ``{"r": 3, "family": "direct"}``
        for interpolation.
    refinements : grid sizes n of the n x n meshes.
    """
    meshes = study_meshes(refinements, distortion, seed)
    h = [m.h_max for m in meshes]
    if problem == "mixed":
        s, variant = element.get("s", 1), element.get("variant", FULL)
        table = ConvergenceTable(f"AC_{s} {variant}", list(refinements), h,
                                 {"u": [], "div u": [], "p": []})
        for m in meshes:
            for k, v in mixed_errors(m, s, variant).items():
                table.errors[k].append(v)
        return table
    if problem == "interpolation":
        r, family = element.get("r", 2), element.get("family", "direct")
        errs = [interpolation_error(m, r, family) for m in meshes]
        return ConvergenceTable(f"DS_{r} {family} interpolation", list(refinements), h, {"u": errs})
    raise ValueError(f"unknown problem {problem!r}; use 'mixed' or 'interpolation'")
