"""Hybrid mixed solve for the auxiliary velocity and the wetting potential.

Unknowns per cell are the AC velocity coefficients u and pressure
coefficients p; the multipliers live on the skeleton. The block system is

    A u - B p + L lam = F       F = -int_{Gamma_D} Phi_B v.n
    B^T u             = Q       Q = int q_t w - B^T u_c
    sum_E L^T u       = G       G = int_{Gamma_N} (u_B - u_c.n) mu

Both u and p are eliminated cellwise, leaving a sparse SPD system for lam.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import MissingBoundaryCondition, NonPositiveMobility, SingularSystem, SolverFailure
from .mesh import jacobians, map_points, reference_edge_points
from .mixed import FULL, ACSpace, TraceSpace, edge_flux_moments, legendre_modes
from .quadrature import edge_quadrature_rule, quadrature_rule
from .sparse import ORDERING


def _as_field(value, points):
    """Evaluate a constant or callable ``f(points (..., 2))`` at points."""
    if callable(value):
        pts = np.asarray(points)
        return np.asarray(value(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape[:-1])
    return np.full(np.asarray(points).shape[:-1], float(value))


@dataclass(frozen=True)
class BoundaryCondition:
    """``kind`` is 'dirichlet' (value = Phi_B) or 'neumann' (value = outward u_B)."""

    kind: str
    value: object = 0.0

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann"):
            raise ValueError(f"boundary condition kind must be dirichlet or neumann, got {self.kind!r}")


def dirichlet(value=0.0):
    return BoundaryCondition("dirichlet", value)


def neumann(value=0.0):
    return BoundaryCondition("neumann", value)


class MixedDiscretization:
    """Per-cell tabulations shared by the flow and capillary solvers."""

    def __init__(self, mesh, s=1, variant=FULL, quad_order=None, trace_excluded_tags=()):
        self.mesh = mesh
        self.space = ACSpace(mesh, s, variant)
        self.s = s
        self.quad_order = 2 * s + 4 if quad_order is None else quad_order
        self.rule = quadrature_rule(self.quad_order)
        self.vals, self.divs = self.space.tabulate(self.rule.points)
        self.pvals, _ = self.space.tabulate_pressure(self.rule.points)
        self.x = map_points(mesh.coords, self.rule.points)
        _, det = jacobians(mesh.coords, self.rule.points)
        self.w = det * self.rule.weights
        self.B = np.einsum("cq,cqi,cqm->cim", self.w, self.divs, self.pvals)
        nc, nq, m, _ = self.vals.shape
        # (nc, m, nq*2) layout turns the weighted mass products into batched matmuls
        self._valsT = np.ascontiguousarray(self.vals.transpose(0, 2, 1, 3).reshape(nc, m, 2 * nq))
        self.trace = TraceSpace(mesh, s, trace_excluded_tags)
        self.L_all = edge_flux_moments(self.space, self.trace, order=2 * s + 2)
        self.trace_map = self.trace.cell_dofmap()
        self.L = np.where(self.trace_map[:, None, :] >= 0, self.L_all, 0.0)

    def mass_matrices(self, weight):
        """A[c] = int weight v_j . v_i with ``weight`` of shape (nc,) or (nc, nq)."""
        weight = np.asarray(weight, dtype=float)
        if weight.ndim == 1:
            weight = weight[:, None]
        wq = np.repeat(np.broadcast_to(self.w * weight, self.w.shape), 2, axis=1)
        X = self._valsT
        return (X * wq[:, None, :]) @ X.transpose(0, 2, 1)

    def assemble_schur(self, H_cell):
        """Scatter per-cell (nl x nl) blocks into the global multiplier matrix."""
        tm = self.trace_map
        rows = np.broadcast_to(tm[:, :, None], H_cell.shape)
        cols = np.broadcast_to(tm[:, None, :], H_cell.shape)
        keep = (rows >= 0) & (cols >= 0)
        n = self.trace.ndof
        return sp.csc_matrix((H_cell[keep], (rows[keep], cols[keep])), shape=(n, n))

    def scatter_vector(self, v_cell):
        keep = self.trace_map >= 0
        return np.bincount(self.trace_map[keep], weights=v_cell[keep], minlength=self.trace.ndof)

    def gather(self, lam):
        return np.append(lam, 0.0)[self.trace_map]

    def velocity_at(self, u, ref, cells=None):
        vals, _ = self.space.tabulate(ref, cells)
        uc = u if cells is None else u[cells]
        return np.einsum("cpmd,cm->cpd", vals, uc)

    def flux_jumps(self, u):
        """Sum over both sides of int_gamma u.n_dE mu for every interior multiplier."""
        mom = np.einsum("cik,ci->ck", self.L_all, u)
        nm = self.trace.n_modes
        ec, el = self.mesh.edge_cells, self.mesh.edge_local
        inner = self.mesh.interior_edges
        cols = el[inner, :, None] * nm + np.arange(nm)
        a = mom[ec[inner, 0][:, None], cols[:, 0]]
        b = mom[ec[inner, 1][:, None], cols[:, 1]]
        return a + b

    def boundary_moments(self, u, edges):
        """int_gamma u.n mu on the given boundary edges (n_e, s+1)."""
        mom = np.einsum("cik,ci->ck", self.L_all, u)
        nm = self.trace.n_modes
        c = self.mesh.edge_cells[edges, 0]
        k = self.mesh.edge_local[edges, 0]
        return mom[c[:, None], k[:, None] * nm + np.arange(nm)]


@dataclass
class FlowSystem:
    A: np.ndarray
    F: np.ndarray
    Q: np.ndarray
    G: np.ndarray
    H_cell: np.ndarray
    rhs_cell: np.ndarray
    AiB: np.ndarray
    AiL: np.ndarray
    AiF: np.ndarray
    Dinv: np.ndarray
    schur: object
    rhs: np.ndarray


@dataclass
class FlowSolution:
    u: np.ndarray       # (nc, n_velocity)
    p: np.ndarray       # (nc, n_pressure)
    lam: np.ndarray     # multiplier dofs
    residual: float

    def divergence_moments(self, disc):
        """int_E div u_a w_m per cell."""
        return np.einsum("cim,ci->cm", disc.B, self.u)


def divergence_projection(solution, disc, cell=None):
    mom = solution.divergence_moments(disc)
    return mom if cell is None else mom[cell]


class FlowSolver:
    """Hybrid mixed solver for the wetting potential and auxiliary velocity.

    Parameters
    ----------
    mesh : Mesh
    bc : dict
        ``{tag: BoundaryCondition}`` covering every boundary tag.
    s, variant : AC element index and family.
    permeability : array_like, shape (nc,)
    pure_neumann : {"error", "pin_mean"}
        Without Dirichlet edges the multiplier system is singular; "pin_mean"
        adds a length-weighted zero-mean constraint on the mode-0 dofs.
    """

    def __init__(self, mesh, bc, s=1, variant=FULL, permeability=None, quad_order=None,
                 pure_neumann="error"):
        missing = [g for g in mesh.boundary_edges if mesh.edge_tags[g] not in bc]
        if missing:
            g = missing[0]
            raise MissingBoundaryCondition(int(g), mesh.edge_tags[g])
        self.mesh = mesh
        self.bc = dict(bc)
        dtags = [t for t, c in self.bc.items() if c.kind == "dirichlet"]
        self.disc = MixedDiscretization(mesh, s, variant, quad_order, trace_excluded_tags=dtags)
        self.permeability = np.ones(mesh.n_cells) if permeability is None else np.asarray(permeability, float)
        self.dirichlet_edges = np.array([g for g in mesh.boundary_edges if mesh.edge_tags[g] in dtags],
                                        dtype=np.int64)
        self.neumann_edges = np.array([g for g in mesh.boundary_edges if mesh.edge_tags[g] not in dtags],
                                      dtype=np.int64)
        self.pure_neumann = pure_neumann
        self._F = self._dirichlet_rhs()
        self._G = self._neumann_rhs()

    @property
    def space(self):
        return self.disc.space

    def _edge_points(self, g, rule):
        c, k = self.mesh.edge_cells[g, 0], self.mesh.edge_local[g, 0]
        ref = reference_edge_points(k, rule.points)
        return c, k, ref, map_points(self.mesh.coords[c][None], ref[None])[0]

    def _dirichlet_rhs(self):
        F = np.zeros((self.mesh.n_cells, self.space.n_velocity))
        rule = edge_quadrature_rule(2 * self.disc.s + 6)
        for g in self.dirichlet_edges:
            c, k, ref, x = self._edge_points(g, rule)
            val = _as_field(self.bc[self.mesh.edge_tags[g]].value, x)
            v, _ = self.space.tabulate(ref, [c])
            vn = v[0] @ self.mesh.cell_edge_normals[c, k]
            ds = 0.5 * self.mesh.cell_edge_lengths[c, k] * rule.weights
            F[c] -= (ds * val) @ vn
        return F

    def _neumann_rhs(self):
        G = np.zeros(self.disc.trace.ndof)
        nm = self.disc.trace.n_modes
        rule = edge_quadrature_rule(2 * self.disc.s + 6)
        P = legendre_modes(rule.points, nm)
        for g in self.neumann_edges:
            c, k, _, x = self._edge_points(g, rule)
            val = _as_field(self.bc[self.mesh.edge_tags[g]].value, x)
            ds = 0.5 * self.mesh.cell_edge_lengths[c, k] * rule.weights
            G[self.disc.trace.dofs[g]] += (ds * val) @ P
        return G

    def assemble(self, lam_t=1.0, q_t=None, capillary_source=None, capillary_boundary=None):
        """Build the condensed system.

        ``lam_t`` is a scalar, per-cell (nc,) or per-quadrature-point (nc, nq)
        total mobility. ``q_t`` is a callable or constant source.
        ``capillary_source`` holds the per-cell moments B^T u_c (nc, n_pressure).
        ``capillary_boundary`` optionally gives int u_c.n mu on the Neumann
        multiplier dofs.
        """
        disc = self.disc
        nc = self.mesh.n_cells
        lam_t = np.broadcast_to(np.asarray(lam_t, dtype=float), (nc,)) if np.ndim(lam_t) <= 1 else lam_t
        if np.any(np.asarray(lam_t) <= 0.0):
            raise NonPositiveMobility("total mobility must be positive on every cell")
        weight = 1.0 / (np.asarray(lam_t, dtype=float).reshape(nc, -1) * self.permeability[:, None])
        A = disc.mass_matrices(weight)
        F = self._F
        if q_t is None:
            Q = np.zeros((nc, self.space.n_pressure))
        else:
            Q = np.einsum("cq,cq,cqm->cm", disc.w, _as_field(q_t, disc.x), disc.pvals)
        if capillary_source is not None:
            Q = Q - capillary_source
        G = self._G.copy()
        if capillary_boundary is not None:
            G = G - capillary_boundary

        nw, nl = disc.B.shape[2], disc.L.shape[2]
        sol = np.linalg.solve(A, np.concatenate([disc.B, disc.L, F[:, :, None]], axis=2))
        AiB, AiL, AiF = sol[:, :, :nw], sol[:, :, nw:nw + nl], sol[:, :, -1]
        BtAiB = np.einsum("cim,cin->cmn", disc.B, AiB)
        Dinv = np.linalg.inv(BtAiB)
        LtAiB = np.einsum("cik,cim->ckm", disc.L, AiB)
        H_cell = np.einsum("cik,cil->ckl", disc.L, AiL) - LtAiB @ Dinv @ LtAiB.transpose(0, 2, 1)
        H_cell = 0.5 * (H_cell + H_cell.transpose(0, 2, 1))
        resid_p = Q - np.einsum("cim,ci->cm", disc.B, AiF)
        rhs_cell = np.einsum("cik,ci->ck", disc.L, AiF) + np.einsum("ckm,cmn,cn->ck", LtAiB, Dinv, resid_p)
        schur = disc.assemble_schur(H_cell)
        rhs = disc.scatter_vector(rhs_cell) - G
        return FlowSystem(A, F, Q, G, H_cell, rhs_cell, AiB, AiL, AiF, Dinv, schur, rhs)

    def _solve_multipliers(self, system):
        H, rhs = system.schur, system.rhs
        n = H.shape[0]
        if n == 0:
            return np.zeros(0), 0.0
        if len(self.dirichlet_edges) == 0:
            if self.pure_neumann != "pin_mean":
                raise SingularSystem("pure Neumann flow problem needs pure_neumann='pin_mean'")
            # sources must balance the prescribed boundary flux
            act = np.flatnonzero(self.disc.trace.active & (self.mesh.edge_cells[:, 1] < 0))
            net = system.Q[:, 0].sum() - system.G[self.disc.trace.dofs[act, 0]].sum()
            size = np.abs(system.Q[:, 0]).sum() + np.abs(system.G).sum()
            if abs(net) > 1e-10 * max(size, 1e-300):
                raise SingularSystem(f"pure Neumann data are incompatible (net source {net:.3e})")
            c = np.zeros(n)
            act = np.flatnonzero(self.disc.trace.active)
            c[self.disc.trace.dofs[act, 0]] = self.mesh.edge_lengths[act]
            Hb = sp.bmat([[H, sp.csc_matrix(c[:, None])], [sp.csc_matrix(c[None, :]), None]], format="csc")
            sol = spla.splu(Hb, permc_spec=ORDERING).solve(np.append(rhs, 0.0))
            lam = sol[:n]
        else:
            lam = spla.splu(H.tocsc(), permc_spec=ORDERING).solve(rhs)
        scale = max(np.abs(rhs).max(), np.abs(H @ lam).max(), 1e-300)
        res = float(np.abs(H @ lam - rhs).max() / scale) if len(self.dirichlet_edges) else 0.0
        if not np.isfinite(lam).all() or res > 1e-8:
            raise SolverFailure(res, "multiplier solve failed")
        return lam, res

    def solve(self, system):
        disc = self.disc
        lam, res = self._solve_multipliers(system)
        lam_c = disc.gather(lam)
        # local saddle-point solve recovers (u, p) with B^T u = Q to roundoff
        nv, nw = disc.B.shape[1], disc.B.shape[2]
        K = np.zeros((self.mesh.n_cells, nv + nw, nv + nw))
        K[:, :nv, :nv] = system.A
        K[:, :nv, nv:] = -disc.B
        K[:, nv:, :nv] = disc.B.transpose(0, 2, 1)
        rhs = np.concatenate([system.F - np.einsum("cik,ck->ci", disc.L, lam_c), system.Q], axis=1)
        up = np.linalg.solve(K, rhs[:, :, None])[:, :, 0]
        return FlowSolution(up[:, :nv], up[:, nv:], lam, res)

    def run(self, lam_t=1.0, q_t=None, capillary_source=None, capillary_boundary=None):
        return self.solve(self.assemble(lam_t, q_t, capillary_source, capillary_boundary))

    def dump_schur(self, system, path):
        """Write the multiplier matrix as 'row col value' triplets."""
        coo = system.schur.tocoo()
        with open(path, "w", encoding="ascii") as fh:
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i} {j} {float(v)!r}\n")


def assemble_flow(mesh, bc, lam_t=1.0, permeability=None, q_t=None, capillary_source=None, s=1,
                  variant=FULL):
    solver = FlowSolver(mesh, bc, s, variant, permeability)
    return solver, solver.assemble(lam_t, q_t, capillary_source)


def condense_and_solve(solver, system):
    return solver.solve(system)
