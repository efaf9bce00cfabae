"""Capillary flux by the zeta substitution.

With zeta = lambda_n_hat Phi_c_hat the local problems read

    A u_c + L zeta = b,     sum_E L^T u_c = 0,

where A = int K^-1 v.v, b_i = int Phi_c div(lambda_n v_i) and the
multipliers live on every edge, boundary edges included, which imposes
u_c.n = 0 on the domain boundary. The Schur matrix sum L^T A^-1 L does not
depend on the saturation; it is factorized once.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .errors import SingularSystem, SolverFailure
from .flow import MixedDiscretization
from .mesh import reference_edge_points
from .mixed import FULL
from .quadrature import edge_quadrature_rule
from .sparse import ORDERING


@dataclass
class CapillaryFlux:
    u: np.ndarray        # (nc, n_velocity)
    zeta: np.ndarray     # multiplier dofs
    rhs: np.ndarray      # (nc, n_velocity) cell right-hand sides b
    source: np.ndarray   # (nc, n_pressure) B^T u_c


class CapillarySolver:
    """Assemble and solve the capillary flux for given saturation fields.

    Parameters
    ----------
    mesh : Mesh
    model : closure bundle (``TwoPhaseModel`` or ``LinearTracerModel``)
    eg_space : EGSpace, optional
        Needed for ``solve_from_dofs``.
    formulation : {"zeta", "weighted"}
        "weighted" solves the original lambda_n_hat-weighted system with the
        arithmetic mean of the two edge traces; it is singular where
        lambda_n_hat vanishes.
    """

    def __init__(self, mesh, model, s=1, variant=FULL, eg_space=None, quad_order=None, formulation="zeta"):
        self.mesh = mesh
        self.model = model
        self.formulation = formulation
        self.disc = MixedDiscretization(mesh, s, variant, quad_order)
        k = np.asarray(model.permeability, dtype=float)
        self.permeability = np.broadcast_to(k, (mesh.n_cells,)).copy()
        self.A = self.disc.mass_matrices(1.0 / self.permeability)
        self.Ainv = np.linalg.inv(self.A)
        self.AiL = self.Ainv @ self.disc.L
        self.H_cell = np.einsum("cik,cil->ckl", self.disc.L, self.AiL)
        self.H_cell = 0.5 * (self.H_cell + self.H_cell.transpose(0, 2, 1))
        self.schur = self.disc.assemble_schur(self.H_cell)
        self.factorizations = 0
        self._lu = None
        self.eg_space = eg_space
        if eg_space is not None:
            self._tab = eg_space.tabulate(self.disc.rule.points)
            rule = edge_quadrature_rule(2 * eg_space.r + 2)
            self._edge_rule = rule
            self._edge_tab = [eg_space.tabulate(reference_edge_points(k, rule.points)) for k in range(4)]

    @property
    def factorization(self):
        if self._lu is None:
            self._lu = spla.splu(self.schur.tocsc(), permc_spec=ORDERING)
            self.factorizations += 1
        return self._lu

    def assemble_rhs(self, S, gradS):
        """b_i = int Phi_c (lambda_n' grad S . v_i + lambda_n div v_i) per cell.

        ``S`` is (nc, nq) and ``gradS`` (nc, nq, 2) at the volume quadrature
        points of ``self.disc.rule``.
        """
        disc = self.disc
        phi_c, _ = self.model.capillary_potential(S, self.permeability[:, None])
        mob = self.model.mobilities(S)
        lam_n, dlam_n = mob.lam_n, mob.dlam_n
        dvs = (disc.vals @ (dlam_n[..., None] * gradS)[..., None])[..., 0] + lam_n[..., None] * disc.divs
        return ((disc.w * phi_c)[:, None, :] @ dvs)[:, 0, :]

    def solve(self, S, gradS, edge_lambda_n=None):
        b = self.assemble_rhs(S, gradS)
        if self.formulation == "weighted":
            return self._solve_weighted(b, edge_lambda_n)
        disc = self.disc
        rhs = disc.scatter_vector(np.einsum("cik,ci->ck", self.AiL, b))
        if not np.any(rhs):
            zeta = np.zeros_like(rhs)
        else:
            zeta = self.factorization.solve(rhs)
            res = np.abs(self.schur @ zeta - rhs).max() / np.abs(rhs).max()
            if not np.isfinite(res) or res > 1e-8:
                raise SolverFailure(float(res), "capillary multiplier solve failed")
        u = np.einsum("cij,cj->ci", self.Ainv, b - np.einsum("cik,ck->ci", disc.L, disc.gather(zeta)))
        return CapillaryFlux(u, zeta, b, np.einsum("cim,ci->cm", disc.B, u))

    def _solve_weighted(self, b, edge_lambda_n):
        """Original formulation: L_lambda carries the interface mobility."""
        if edge_lambda_n is None:
            raise ValueError("the weighted formulation needs per-edge lambda_n values")
        disc = self.disc
        nm = disc.trace.n_modes
        lam_cols = np.repeat(edge_lambda_n[self.mesh.cell_edges], nm, axis=1)
        L_lam = disc.L * lam_cols[:, None, :]
        H_cell = np.einsum("cik,cij,cjl->ckl", disc.L, self.Ainv, L_lam)
        H = disc.assemble_schur(H_cell)
        rhs = disc.scatter_vector(np.einsum("cik,ci->ck", self.AiL, b))
        if np.any(np.abs(edge_lambda_n) <= 0.0):
            raise SingularSystem("interface mobility vanishes; the weighted capillary system is singular")
        try:
            phi_hat = spla.splu(H.tocsc(), permc_spec=ORDERING).solve(rhs)
        except RuntimeError as exc:
            raise SingularSystem(str(exc)) from None
        u = np.einsum("cij,cj->ci", self.Ainv, b - np.einsum("cik,ck->ci", L_lam, disc.gather(phi_hat)))
        return CapillaryFlux(u, phi_hat, b, np.einsum("cim,ci->cm", disc.B, u))

    def fields_from_dofs(self, S_dofs):
        """EG saturation values and gradients at the volume quadrature points."""
        vals, grads = self._tab
        coef = np.append(S_dofs, 0.0)[self.eg_space.dofmap]
        return np.einsum("cqk,ck->cq", vals, coef), np.einsum("cqkd,ck->cqd", grads, coef)

    def edge_lambda_n(self, S_dofs):
        """Arithmetic mean over the two sides of the edge-averaged lambda_n."""
        coef = np.append(S_dofs, 0.0)[self.eg_space.dofmap]
        w = self._edge_rule.weights / 2.0
        side = np.zeros((self.mesh.n_cells, 4))
        for k in range(4):
            sv = np.einsum("cqk,ck->cq", self._edge_tab[k][0], coef)
            side[:, k] = self.model.mobilities(sv).lam_n @ w
        mesh = self.mesh
        acc = np.zeros(mesh.n_edges)
        cnt = np.zeros(mesh.n_edges)
        np.add.at(acc, mesh.cell_edges.ravel(), side.ravel())
        np.add.at(cnt, mesh.cell_edges.ravel(), 1.0)
        return acc / cnt

    def solve_from_dofs(self, S_dofs):
        S, gradS = self.fields_from_dofs(S_dofs)
        lam_hat = self.edge_lambda_n(S_dofs) if self.formulation == "weighted" else None
        return self.solve(S, gradS, lam_hat)

    def zero_flux(self):
        disc = self.disc
        nc = self.mesh.n_cells
        return CapillaryFlux(np.zeros((nc, disc.space.n_velocity)), np.zeros(disc.trace.ndof),
                             np.zeros((nc, disc.space.n_velocity)), np.zeros((nc, disc.space.n_pressure)))


def capillary_source_for_flow(flux):
    return flux.source
