"""Enriched Galerkin transport with upwinding, interior penalties and
entropy viscosity, advanced by backward Euler.

Jumps and averages on an interior edge use ``[[w]] = w_i - w_j`` with n_gamma
pointing from E_i to E_j. This is the sign for which the face terms are the
integration-by-parts boundary terms of the cells on either side.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, InflowDataMissing, SolverFailure
from .mesh import jacobians, map_points, reference_edge_points
from .quadrature import edge_quadrature_rule, quadrature_rule
from .sparse import ORDERING

S_FORMS = {"nipg": -1, "iipg": 0, "sipg": 1}


@dataclass(frozen=True)
class TransportParams:
    """Stabilization and discretization parameters.

    ``lambda_E = inf`` gives mu_h = mu_max. ``residual_derivative`` selects
    f_w' (default) or the literal f_w in the gradient term of the entropy
    residual.
    """

    sigma: float = 1.0
    s_form: int = -1
    lambda_max: float = 0.2
    lambda_E: float = 1.0
    residual_derivative: str = "df"
    inflow_tol: float = 1e-10

    def __post_init__(self):
        if self.sigma <= 0:
            raise ConfigError("transport.sigma", "penalty must be positive")
        if self.s_form not in (-1, 0, 1):
            raise ConfigError("transport.s_form", "s_form must be -1, 0 or 1")
        if self.lambda_max <= 0:
            raise ConfigError("transport.lambda_max", "lambda_max must be positive")
        if not self.lambda_E > 0:
            raise ConfigError("transport.lambda_E", "lambda_E must be positive or inf")
        if self.residual_derivative not in ("df", "f"):
            raise ConfigError("transport.residual_derivative", "use 'df' or 'f'")


@dataclass
class SaturationState:
    S: np.ndarray          # S^m
    S_prev: np.ndarray     # S^{m-1}
    mu: np.ndarray         # viscosity used to reach S^m
    t: float = 0.0
    step: int = 0


def upwind_trace(S_i, S_j, un):
    """Upwind interface value: E_i side where u.n_gamma >= 0."""
    return np.where(np.asarray(un) >= 0.0, S_i, S_j)


def penalty_term(jump_s, jump_w, ds, length, r, sigma=1.0):
    """(r^2 sigma / |gamma|) int [[s]][[w]] on one edge with weights ``ds``."""
    return r * r * sigma / length * np.sum(ds * jump_s * jump_w)


def _evaluate(values, field):
    if field is None:
        return None
    if callable(field):
        pts = np.asarray(values)
        return np.asarray(field(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape[:-1])
    return np.full(np.asarray(values).shape[:-1], float(field))


class TransportSolver:
    """Backward-Euler EG transport on a fixed mesh.

    Parameters
    ----------
    eg_space : EGSpace
    ac_space : ACSpace
        Space in which the velocity coefficients handed to ``step`` live.
    model : closure bundle providing ``fractional_flow`` and ``porosity``.
    """

    def __init__(self, eg_space, ac_space, model, params=TransportParams(), quad_order=None):
        self.space = eg_space
        self.ac = ac_space
        self.model = model
        self.params = params
        mesh = eg_space.mesh
        self.mesh = mesh
        r = eg_space.r
        self.r = r
        # the velocity supplements and mapped DS functions are rational; two extra
        # orders keep u.grad v integration close to the divergence theorem
        self.quad_order = 2 * r + 6 if quad_order is None else quad_order
        self.rule = quadrature_rule(self.quad_order)
        self.erule = edge_quadrature_rule(2 * r + 2)
        self.phi = float(model.porosity)
        self.dofmap = eg_space.dofmap
        m = eg_space.n_local
        self.m = m

        # volume tables
        self.vals, self.grads = eg_space.tabulate(self.rule.points)
        _, det = jacobians(mesh.coords, self.rule.points)
        self.w = det * self.rule.weights
        self.x = map_points(mesh.coords, self.rule.points)
        self.ac_vals, _ = ac_space.tabulate(self.rule.points)
        nc, nq = self.w.shape
        # matmul layouts of the volume tables
        self._gradsQ = np.ascontiguousarray(self.grads.transpose(0, 1, 3, 2).reshape(nc, 2 * nq, m))
        self._gradsT = np.ascontiguousarray(self._gradsQ.transpose(0, 2, 1))
        self._acQ = np.ascontiguousarray(self.ac_vals.transpose(0, 1, 3, 2).reshape(nc, 2 * nq, -1))

        # per local edge tables (ccw point order)
        tau = self.erule.points
        self.face_vals, self.face_grads, self.face_ac, self.face_x = [], [], [], []
        for k in range(4):
            ref = reference_edge_points(k, tau)
            v, g = eg_space.tabulate(ref)
            a, _ = ac_space.tabulate(ref)
            self.face_vals.append(v)
            self.face_grads.append(g)
            self.face_ac.append(a)
            self.face_x.append(map_points(mesh.coords, ref))
        self._build_faces()
        self._build_pattern()

    # ------------------------------------------------------------------
    # static structure
    # ------------------------------------------------------------------

    def _side(self, cells, local, reverse):
        sl = slice(None, None, -1) if reverse else slice(None)
        v = np.stack([self.face_vals[k][c][sl] for c, k in zip(cells, local)]) if len(cells) else None
        g = np.stack([self.face_grads[k][c][sl] for c, k in zip(cells, local)]) if len(cells) else None
        a = np.stack([self.face_ac[k][c][sl] for c, k in zip(cells, local)]) if len(cells) else None
        return v, g, a

    def _build_faces(self):
        mesh = self.mesh
        inner = mesh.interior_edges
        self.inner = inner
        ci, cj = mesh.edge_cells[inner, 0], mesh.edge_cells[inner, 1]
        ki, kj = mesh.edge_local[inner, 0], mesh.edge_local[inner, 1]
        self.ci, self.cj = ci, cj
        vi, gi, ai = self._side(ci, ki, False)
        vj, gj, aj = self._side(cj, kj, True)
        n = mesh.edge_normals[inner]
        ds = 0.5 * mesh.edge_lengths[inner][:, None] * self.erule.weights[None, :]
        self.inner_ds = ds
        self.inner_n = n
        self.vi, self.vj = vi, vj
        self.gni = np.einsum("eqmd,ed->eqm", gi, n)
        self.gnj = np.einsum("eqmd,ed->eqm", gj, n)
        self.ai_n = np.einsum("eqmd,ed->eqm", ai, n)
        self.aj_n = np.einsum("eqmd,ed->eqm", aj, n)
        jump = np.concatenate([vi, -vj], axis=2)                   # (ne, nq, 2m)
        zero = np.zeros_like(self.gni)
        Gi = np.concatenate([self.gni, zero], axis=2)
        Gj = np.concatenate([zero, self.gnj], axis=2)
        s = self.params.s_form
        Fi = -0.5 * np.einsum("eq,eqa,eqb->eab", ds, jump, Gi)
        Fj = -0.5 * np.einsum("eq,eqa,eqb->eab", ds, jump, Gj)
        self.Fi = Fi + s * Fi.transpose(0, 2, 1)
        self.Fj = Fj + s * Fj.transpose(0, 2, 1)
        pen = self.r**2 * self.params.sigma / mesh.edge_lengths[inner]
        self.P = pen[:, None, None] * np.einsum("eq,eqa,eqb->eab", ds, jump, jump)
        self.jump = jump
        self.pair_dofs = np.concatenate([self.dofmap[ci], self.dofmap[cj]], axis=1)  # (ne, 2m)

        bnd = mesh.boundary_edges
        self.bnd = bnd
        cb, kb = mesh.edge_cells[bnd, 0], mesh.edge_local[bnd, 0]
        self.cb = cb
        vb, _, ab = self._side(cb, kb, False)
        nb = mesh.edge_normals[bnd]
        self.vb = vb
        self.ab_n = np.einsum("eqmd,ed->eqm", ab, nb) if len(bnd) else None
        self.bnd_ds = 0.5 * mesh.edge_lengths[bnd][:, None] * self.erule.weights[None, :]
        self.bnd_x = np.stack([self.face_x[k][c] for c, k in zip(cb, kb)]) if len(bnd) else None

        self.Mloc = self.phi * np.einsum("cq,cqa,cqb->cab", self.w, self.vals, self.vals)
        self.Kloc = np.einsum("cq,cqad,cqbd->cab", self.w, self.grads, self.grads)

    def _build_pattern(self):
        """COO entries of every block, the coefficient slot of each, and the CSR scatter."""
        nc, m = self.mesh.n_cells, self.m
        ne = len(self.inner)
        dm = self.dofmap
        cell_r = np.broadcast_to(dm[:, :, None], (nc, m, m)).ravel()
        cell_c = np.broadcast_to(dm[:, None, :], (nc, m, m)).ravel()
        pd = self.pair_dofs
        face_r = np.broadcast_to(pd[:, :, None], (ne, 2 * m, 2 * m)).ravel()
        face_c = np.broadcast_to(pd[:, None, :], (ne, 2 * m, 2 * m)).ravel()
        rows = np.concatenate([cell_r, cell_r, face_r, face_r, face_r])
        cols = np.concatenate([cell_c, cell_c, face_c, face_c, face_c])
        data = np.concatenate([self.Mloc.ravel(), self.Kloc.ravel(), self.Fi.ravel(), self.Fj.ravel(),
                               self.P.ravel()])
        # coefficient slots: 0 -> 1/dt, 1 -> 1, 2 + c -> mu_c
        nb = m * m
        slot = np.concatenate([
            np.zeros(nc * nb, dtype=np.int64),
            2 + np.repeat(np.arange(nc), nb),
            2 + np.repeat(self.ci, 4 * nb),
            2 + np.repeat(self.cj, 4 * nb),
            np.ones(ne * 4 * nb, dtype=np.int64),
        ])
        keep = (rows >= 0) & (cols >= 0)
        rows, cols, data, slot = rows[keep], cols[keep], data[keep], slot[keep]
        n = self.space.ndof
        lin = rows * n + cols
        uniq, inv = np.unique(lin, return_inverse=True)
        self._inv = inv
        self._data = data
        self._slot = slot
        self._nnz = len(uniq)
        ur, uc = uniq // n, uniq % n
        self._indptr = np.searchsorted(ur, np.arange(n + 1))
        self._indices = uc
        self.n = n
        mrows, mcols = cell_r, cell_c
        mk = (mrows >= 0) & (mcols >= 0)
        self.mass = sp.csr_matrix((self.Mloc.ravel()[mk], (mrows[mk], mcols[mk])), shape=(n, n))

    def system_matrix(self, mu, dt):
        coef = np.concatenate([[1.0 / dt, 1.0], np.asarray(mu, dtype=float)])
        vals = np.bincount(self._inv, weights=self._data * coef[self._slot], minlength=self._nnz)
        return sp.csr_matrix((vals, self._indices, self._indptr), shape=(self.n, self.n))

    # ------------------------------------------------------------------
    # fields
    # ------------------------------------------------------------------

    def coefficients(self, S):
        return np.append(S, 0.0)[self.dofmap]

    def values(self, S):
        """S and grad S at volume quadrature points."""
        c = self.coefficients(S)[:, :, None]
        nc, nq = self.w.shape
        return (self.vals @ c)[..., 0], (self._gradsQ @ c).reshape(nc, nq, 2)

    def velocity(self, u):
        nc, nq = self.w.shape
        return (self._acQ @ u[:, :, None]).reshape(nc, nq, 2)

    def face_fluxes(self, u):
        """u.n_gamma on interior edges (averaged over the two sides) and boundary edges."""
        ui = np.einsum("eqm,em->eq", self.ai_n, u[self.ci])
        uj = np.einsum("eqm,em->eq", self.aj_n, u[self.cj])
        un_b = np.einsum("eqm,em->eq", self.ab_n, u[self.cb]) if len(self.bnd) else np.zeros((0, 0))
        return 0.5 * (ui + uj), un_b

    def inflow_edges(self, un_b, un=None):
        """Boolean mask over boundary edges with edge-average u.n < 0.

        The tolerance is relative to the largest face flux, interior faces
        ``un`` included, so that no-flow boundaries stay neutral.
        """
        if un_b.size == 0:
            return np.zeros(0, dtype=bool)
        avg = un_b @ self.erule.weights / 2.0
        scale = np.abs(avg).max()
        if un is not None and un.size:
            scale = max(scale, np.abs(un).max())
        scale = max(scale, 1e-300)
        return avg < -self.params.inflow_tol * scale

    def project(self, S0):
        """L2 projection (phi S, w) = (phi S0, w)."""
        f = _evaluate(self.x, S0)
        b = np.zeros(self.n)
        loc = self.phi * np.einsum("cq,cq,cqk->ck", self.w, f, self.vals)
        keep = self.dofmap >= 0
        np.add.at(b, self.dofmap[keep], loc[keep])
        return spla.spsolve(self.mass.tocsc(), b)

    # ------------------------------------------------------------------
    # entropy viscosity
    # ------------------------------------------------------------------

    def entropy_residual(self, S, S_prev, u, dt):
        """max over quadrature points of |R_h| per cell."""
        s, gs = self.values(S)
        sp_, _ = self.values(S_prev)
        f, df = self.model.fractional_flow(s)
        deriv = df if self.params.residual_derivative == "df" else f
        vel = self.velocity(u)
        R = (s**2 - sp_**2) / (2.0 * dt) + s * deriv * np.einsum("cqd,cqd->cq", vel, gs) / self.phi
        return np.abs(R).max(axis=1)

    def mu_max(self, S, u):
        s, _ = self.values(S)
        _, df = self.model.fractional_flow(s)
        vel = self.velocity(u)
        speed = np.abs(s * df) / self.phi * np.linalg.norm(vel, axis=-1)
        return self.params.lambda_max * self.mesh.diameters * speed.max(axis=1)

    def entropy_viscosity(self, S, S_prev, u, dt):
        """Return (mu_h, mu_max, mu_tilde) per cell."""
        mmax = self.mu_max(S, u)
        if np.isinf(self.params.lambda_E):
            return mmax, mmax, np.full_like(mmax, np.inf)
        res = self.entropy_residual(S, S_prev, u, dt)
        mt = 2.0 * self.params.lambda_E * self.mesh.diameters**2 * res
        return np.minimum(mmax, mt), mmax, mt

    # ------------------------------------------------------------------
    # right-hand side and step
    # ------------------------------------------------------------------

    def _flux_terms(self, S, u, S_B, q_w):
        """Per-cell load vectors of L_DG (without the mass term) and boundary bookkeeping."""
        nc = self.mesh.n_cells
        s, _ = self.values(S)
        f, _ = self.model.fractional_flow(s)
        vel = self.velocity(u)
        nc_, nq = self.w.shape
        load = (self._gradsT @ ((self.w * f)[..., None] * vel).reshape(nc_, 2 * nq, 1))[..., 0]
        if q_w is not None:
            load += np.einsum("cq,cq,cqk->ck", self.w, _evaluate(self.x, q_w), self.vals)

        c = self.coefficients(S)
        un, un_b = self.face_fluxes(u)
        si = np.einsum("eqk,ek->eq", self.vi, c[self.ci])
        sj = np.einsum("eqk,ek->eq", self.vj, c[self.cj])
        fstar, _ = self.model.fractional_flow(upwind_trace(si, sj, un))
        flux = self.inner_ds * fstar * un                       # (ne, nq)
        face = -np.einsum("eq,eqa->ea", flux, self.jump)
        m = self.m
        np.add.at(load, self.ci, face[:, :m])
        np.add.at(load, self.cj, face[:, m:])

        bflux = np.zeros(len(self.bnd))
        if len(self.bnd):
            inflow = self.inflow_edges(un_b, un)
            sb = np.einsum("eqk,ek->eq", self.vb, c[self.cb])
            fb, _ = self.model.fractional_flow(sb)
            if inflow.any():
                if S_B is None:
                    raise InflowDataMissing("inflow boundary present but S_B is not set")
                fin, _ = self.model.fractional_flow(self._inflow_values(S_B))
                fb = np.where(inflow[:, None], fin, fb)
            qb = self.bnd_ds * fb * un_b
            bflux = qb.sum(axis=1)
            np.add.at(load, self.cb, -np.einsum("eq,eqk->ek", qb, self.vb))
        return load, bflux

    def _inflow_values(self, S_B):
        """S_B at the boundary quadrature points.

        ``S_B`` is a constant, a callable of points, or a ``{tag: value}``
        mapping covering every boundary tag.
        """
        if not isinstance(S_B, dict):
            return _evaluate(self.bnd_x, S_B)
        tags = [self.mesh.edge_tags[g] for g in self.bnd]
        missing = sorted(set(tags) - set(S_B))
        if missing:
            raise InflowDataMissing(f"no inflow saturation for boundary tag {missing[0]!r}")
        out = np.empty(self.bnd_x.shape[:2])
        for i, t in enumerate(tags):
            out[i] = _evaluate(self.bnd_x[i], S_B[t])
        return out

    def assemble(self, S, u, mu, dt, S_B=None, q_w=None):
        load, bflux = self._flux_terms(S, u, S_B, q_w)
        b = self.mass @ S / dt
        keep = self.dofmap >= 0
        np.add.at(b, self.dofmap[keep], load[keep])
        return self.system_matrix(mu, dt), b, bflux

    def step(self, state, u, dt, S_B=None, q_w=None, mu=None):
        """Advance ``state`` one step with velocity coefficients ``u``."""
        if mu is None:
            mu, _, _ = self.entropy_viscosity(state.S, state.S_prev, u, dt)
        A, b, bflux = self.assemble(state.S, u, mu, dt, S_B, q_w)
        S_new = spla.splu(A.tocsc(), permc_spec=ORDERING).solve(b)
        scale = max(np.abs(b).max(), (abs(A) @ np.abs(S_new)).max(), 1e-300)
        res = np.abs(A @ S_new - b).max() / scale
        if not np.isfinite(res) or res > 1e-12:
            raise SolverFailure(float(res), "transport solve failed")
        self.last_boundary_flux = bflux
        return SaturationState(S_new, state.S, mu, state.t + dt, state.step + 1)

    def initial_state(self, S0):
        S = self.project(S0)
        return SaturationState(S, S.copy(), np.zeros(self.mesh.n_cells), 0.0, 0)

    # ------------------------------------------------------------------
    # conservation diagnostics
    # ------------------------------------------------------------------

    def total_mass(self, S):
        s, _ = self.values(S)
        return self.phi * float(np.sum(self.w * s))

    def cell_mass(self, S):
        s, _ = self.values(S)
        return self.phi * np.sum(self.w * s, axis=1)

    def cell_balance(self, S_new, S_old, u, mu, dt, S_B=None, q_w=None):
        """Per-cell flux balance obtained by testing with each cell indicator.

        Evaluated directly from traces (no assembled matrix): storage plus
        outgoing upwind fluxes, face diffusion, penalty and boundary fluxes,
        minus sources. Returns ``(residual, scale)`` per cell.
        """
        mesh = self.mesh
        storage = (self.cell_mass(S_new) - self.cell_mass(S_old)) / dt
        c_new, c_old = self.coefficients(S_new), self.coefficients(S_old)
        un, un_b = self.face_fluxes(u)
        si = np.einsum("eqk,ek->eq", self.vi, c_old[self.ci])
        sj = np.einsum("eqk,ek->eq", self.vj, c_old[self.cj])
        fstar, _ = self.model.fractional_flow(upwind_trace(si, sj, un))
        adv = np.sum(self.inner_ds * fstar * un, axis=1)
        ni = np.einsum("eqk,ek->eq", self.vi, c_new[self.ci])
        nj = np.einsum("eqk,ek->eq", self.vj, c_new[self.cj])
        gi = np.einsum("eqk,ek->eq", self.gni, c_new[self.ci])
        gj = np.einsum("eqk,ek->eq", self.gnj, c_new[self.cj])
        avg = 0.5 * (mu[self.ci][:, None] * gi + mu[self.cj][:, None] * gj)
        pen = self.r**2 * self.params.sigma / mesh.edge_lengths[self.inner]
        diff = np.sum(self.inner_ds * (-avg + pen[:, None] * (ni - nj)), axis=1)
        out = adv + diff
        div = np.zeros(mesh.n_cells)
        np.add.at(div, self.ci, out)
        np.add.at(div, self.cj, -out)
        absd = np.zeros(mesh.n_cells)
        np.add.at(absd, self.ci, np.abs(out))
        np.add.at(absd, self.cj, np.abs(out))
        if len(self.bnd):
            _, bflux = self._flux_terms(S_old, u, S_B, None)
            np.add.at(div, self.cb, bflux)
            np.add.at(absd, self.cb, np.abs(bflux))
        src = np.zeros(mesh.n_cells)
        if q_w is not None:
            src = np.sum(self.w * _evaluate(self.x, q_w), axis=1)
        resid = storage + div - src
        held = (np.abs(self.cell_mass(S_new)) + np.abs(self.cell_mass(S_old))) / dt
        # pore volume per step: the flux of a unit saturation change, so that
        # cells still at S ~ 0 are not measured against roundoff-sized terms
        pore = self.phi * self.w.sum(axis=1) / dt
        scale = np.abs(storage) + absd + np.abs(src) + held + pore
        return resid, scale

    def boundary_average(self, S, edges):
        """Length-weighted mean trace of S over the given global boundary edges."""
        mask = np.isin(self.bnd, edges)
        if not mask.any():
            return 0.0
        c = self.coefficients(S)
        sb = np.einsum("eqk,ek->eq", self.vb[mask], c[self.cb[mask]])
        ds = self.bnd_ds[mask]
        return float(np.sum(ds * sb) / np.sum(ds))

    def global_balance(self, S_new, S_old, dt, bflux, q_w=None):
        """(mass change) - dt * (sources - outflow); returns (residual, scale)."""
        dm = self.total_mass(S_new) - self.total_mass(S_old)
        src = 0.0 if q_w is None else float(np.sum(self.w * _evaluate(self.x, q_w)))
        net = dt * (src - float(np.sum(bflux)))
        return dm - net, max(abs(dm), abs(net), dt * float(np.sum(np.abs(bflux))), 1e-300)


def assemble_dg_forms(solver, S, u, mu, dt, S_B=None, q_w=None):
    A, b, _ = solver.assemble(S, u, mu, dt, S_B, q_w)
    return A, b
