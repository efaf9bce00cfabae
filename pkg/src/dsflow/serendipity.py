"""Direct serendipity elements DS_r, their continuous global space and the
enriched Galerkin space.

All element computations are batched over cells. Basis functions are
evaluated at reference points; the physical point is obtained through the
bilinear map and the direct (non-mapped) shape functions are then evaluated
in physical coordinates. A mapped serendipity family (reference serendipity
space composed with the inverse map) is provided as the classical control.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DenominatorNonPositive, PointOutsideCell, SingularVandermonde, UnsupportedOrder
from .mesh import (
    REF_VERTICES,
    edge_distance_functions,
    inverse_map,
    jacobians,
    map_points,
    reference_edge_points,
)

MAX_ORDER = 8


# ---------------------------------------------------------------------------
# forward-mode (value, gradient) arithmetic
# ---------------------------------------------------------------------------

class Jet:
    """A scalar field sampled at points together with its gradient."""

    __slots__ = ("v", "g")

    def __init__(self, v, g):
        self.v = v
        self.g = g

    @classmethod
    def const(cls, value, like):
        return cls(np.full_like(like.v, value), np.zeros_like(like.g))

    def __add__(self, o):
        return Jet(self.v + o.v, self.g + o.g)

    def __sub__(self, o):
        return Jet(self.v - o.v, self.g - o.g)

    def __mul__(self, o):
        if isinstance(o, Jet):
            return Jet(self.v * o.v, self.g * o.v[..., None] + o.g * self.v[..., None])
        return Jet(self.v * o, self.g * np.asarray(o)[..., None])

    __rmul__ = __mul__

    def __truediv__(self, o):
        inv = 1.0 / o.v
        return Jet(self.v * inv, (self.g - o.g * (self.v * inv)[..., None]) * inv[..., None])

    def __pow__(self, k):
        if k == 0:
            return Jet(np.ones_like(self.v), np.zeros_like(self.g))
        return Jet(self.v**k, (k * self.v ** (k - 1))[..., None] * self.g)


def _stack(jets):
    return np.stack([j.v for j in jets], axis=-1), np.stack([j.g for j in jets], axis=-2)


# ---------------------------------------------------------------------------
# element geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DSGeometry:
    """Batched per-cell data for the direct construction (Fig. 2 edge order)."""

    normals: np.ndarray   # (nc, 4, 2) outward unit normals n_1..n_4
    anchors: np.ndarray   # (nc, 4, 2) a point on each edge
    h: np.ndarray         # (nc,) cell diameter used to scale l_i
    center: np.ndarray    # (nc, 2)
    n_H: np.ndarray
    n_V: np.ndarray
    inv_xi_V: np.ndarray
    inv_eta_V: np.ndarray
    inv_xi_H: np.ndarray
    inv_eta_H: np.ndarray

    @property
    def xi_V(self):
        return 1.0 / self.inv_xi_V

    @property
    def eta_V(self):
        return 1.0 / self.inv_eta_V

    @property
    def xi_H(self):
        return 1.0 / self.inv_xi_H

    @property
    def eta_H(self):
        return 1.0 / self.inv_eta_H


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def ds_geometry(coords):
    """Geometry constants for a batch of cells ``coords`` (nc, 4, 2).

    Uses the same-direction pairing ``xi_V^-1 = sqrt(1-(n_H.n_1)^2)``,
    ``eta_V^-1 = sqrt(1-(n_H.n_2)^2)``, ``xi_H^-1 = sqrt(1-(n_V.n_3)^2)``,
    ``eta_H^-1 = sqrt(1-(n_V.n_4)^2)``, which keeps the denominators of
    R_V and R_H positive on the closed cell.
    """
    coords = np.asarray(coords, dtype=float)
    normals, anchors = edge_distance_functions(coords)
    n1, n2, n3, n4 = (normals[:, i] for i in range(4))
    n_H = _unit(n3 - n4)
    n_V = _unit(n1 - n2)

    def inv(nd, ni):
        return np.sqrt(np.clip(1.0 - np.sum(nd * ni, axis=-1) ** 2, 0.0, None))

    diff = coords[:, :, None, :] - coords[:, None, :, :]
    h = np.sqrt(np.max(np.sum(diff**2, axis=-1), axis=(1, 2)))
    return DSGeometry(normals, anchors, h, coords.mean(axis=1), n_H, n_V,
                      inv(n_H, n1), inv(n_H, n2), inv(n_V, n3), inv(n_V, n4))


def geometry_constants(cell_coords):
    """``(n_H, n_V, xi_V, eta_V, xi_H, eta_H)`` of one cell."""
    g = ds_geometry(np.asarray(cell_coords, dtype=float)[None])
    return g.n_H[0], g.n_V[0], g.xi_V[0], g.eta_V[0], g.xi_H[0], g.eta_H[0]


def _ell_jets(geo, x):
    """Scaled distance functionals l_i / h as jets; ``x`` is (nc, np, 2)."""
    diff = x[:, :, None, :] - geo.anchors[:, None, :, :]
    vals = -np.sum(diff * geo.normals[:, None, :, :], axis=-1) / geo.h[:, None, None]
    grads = -geo.normals / geo.h[:, None, None]
    grads = np.broadcast_to(grads[:, None, :, :], vals.shape + (2,))
    return [Jet(vals[..., i], grads[..., i, :]) for i in range(4)]


def _rational(la, lb, inv_a, inv_b):
    den = la * inv_a[:, None] + lb * inv_b[:, None]
    if np.any(den.v <= 0.0):
        raise DenominatorNonPositive("rational supplement denominator is not positive")
    return (la - lb) / den


def _rv_rh(geo, x):
    l1, l2, l3, l4 = _ell_jets(geo, x)
    return (_rational(l1, l2, geo.inv_xi_V, geo.inv_eta_V),
            _rational(l3, l4, geo.inv_xi_H, geo.inv_eta_H))


def eval_RV_RH(cell_coords, physical_points):
    """``(R_V, grad R_V, R_H, grad R_H)`` at physical points of one cell."""
    pts = np.atleast_2d(np.asarray(physical_points, dtype=float))
    geo = ds_geometry(np.asarray(cell_coords, dtype=float)[None])
    rv, rh = _rv_rh(geo, pts[None])
    return rv.v[0], rv.g[0], rh.v[0], rh.g[0]


def local_dimension(r):
    if r < 1 or r > MAX_ORDER:
        raise UnsupportedOrder(f"r must be in 1..{MAX_ORDER}, got {r}")
    return 4 if r == 1 else (r + 2) * (r + 1) // 2 + 2


def n_interior(r):
    return 0 if r < 4 else (r - 2) * (r - 3) // 2


# ---------------------------------------------------------------------------
# spanning sets
# ---------------------------------------------------------------------------

def _direct_spanning(geo, x, r):
    """Pre-nodal direct serendipity functions at physical points x (nc, np, 2)."""
    l1, l2, l3, l4 = _ell_jets(geo, x)
    lH = l3 - l4
    lV = l1 - l2
    RV = _rational(l1, l2, geo.inv_xi_V, geo.inv_eta_V)
    RH = _rational(l3, l4, geo.inv_xi_H, geo.inv_eta_H)
    funcs = [l2 * l4, l2 * l3, l1 * l4, l1 * l3]
    b34, b12 = l3 * l4, l1 * l2
    for base, lp, lq, R in ((b34, lH, lV, RV), (b12, lV, lH, RH)):
        funcs += [base * lp**j for j in range(r - 1)]
        funcs += [base * lq * lp**j for j in range(r - 2)]
        funcs.append(base * R * lp ** (r - 2))
    if r >= 4:
        bubble = b12 * b34
        X = (x - geo.center[:, None, :]) / geo.h[:, None, None]
        gx = np.zeros(X.shape)
        gx[..., 0] = 1.0 / geo.h[:, None]
        gy = np.zeros(X.shape)
        gy[..., 1] = 1.0 / geo.h[:, None]
        jx, jy = Jet(X[..., 0], gx), Jet(X[..., 1], gy)
        for d in range(r - 3):
            for b in range(d + 1):
                funcs.append(bubble * (jx ** (d - b)) * (jy**b))
    return _stack(funcs)


def _reference_exponents(r):
    """Monomial exponents of the reference serendipity space S_r."""
    exps = [(a, d - a) for d in range(r + 1) for a in range(d, -1, -1)]
    if r == 1:
        exps.append((1, 1))
    else:
        exps += [(r, 1), (1, r)]
    return exps


def _mapped_spanning(coords, ref, r):
    """Reference serendipity monomials composed with F_E^-1 (values, physical grads)."""
    exps = _reference_exponents(r)
    xh, yh = ref[..., 0], ref[..., 1]
    vals, rg = [], []
    for a, b in exps:
        vals.append(xh**a * yh**b)
        dx = a * xh ** max(a - 1, 0) * yh**b if a else np.zeros_like(xh)
        dy = b * xh**a * yh ** max(b - 1, 0) if b else np.zeros_like(yh)
        rg.append(np.stack([dx, dy], axis=-1))
    vals = np.stack(vals, axis=-1)
    rg = np.stack(rg, axis=-2)
    jac, det = jacobians(coords, ref)
    jinv_t = np.stack([np.stack([jac[..., 1, 1], -jac[..., 1, 0]], -1),
                       np.stack([-jac[..., 0, 1], jac[..., 0, 0]], -1)], -2) / det[..., None, None]
    # physical gradient = J^-T grad_hat
    grads = np.einsum("cpij,cpmj->cpmi", jinv_t, rg)
    return vals, grads


# ---------------------------------------------------------------------------
# nodes
# ---------------------------------------------------------------------------

def interior_lattice(k):
    """P_k Lagrange points on the triangle (-.5,-.5), (.5,-.5), (0,.5)."""
    if k == 0:
        return np.zeros((1, 2))
    a, b, c = np.array([-0.5, -0.5]), np.array([0.5, -0.5]), np.array([0.0, 0.5])
    pts = [a + (i / k) * (b - a) + (j / k) * (c - a) for j in range(k + 1) for i in range(k + 1 - j)]
    return np.array(pts)


def reference_nodes(r):
    """Reference nodes: 4 vertices, r-1 points per local ccw edge, interior lattice."""
    local_dimension(r)
    nodes = [REF_VERTICES]
    if r >= 2:
        tau = -1.0 + 2.0 * np.arange(1, r) / r
        nodes += [reference_edge_points(k, tau) for k in range(4)]
    if r >= 4:
        nodes.append(interior_lattice(r - 4))
    return np.vstack(nodes)


# ---------------------------------------------------------------------------
# element bases
# ---------------------------------------------------------------------------

class ElementBasis:
    """Nodal DS_r (or mapped serendipity) basis for a batch of cells."""

    def __init__(self, coords, r, family="direct", cond_limit=1e13):
        self.coords = np.asarray(coords, dtype=float)
        self.r = int(r)
        self.family = family
        self.dim = local_dimension(r)
        if family not in ("direct", "mapped"):
            raise ValueError(f"unknown family {family!r}")
        self.geometry = ds_geometry(self.coords)
        self.node_ref = reference_nodes(r)
        self.nodes = map_points(self.coords, self.node_ref)
        vand, _ = self.spanning(self.node_ref)
        cond = np.linalg.cond(vand)
        bad = np.flatnonzero(~np.isfinite(cond) | (cond > cond_limit))
        if bad.size:
            raise SingularVandermonde(int(bad[0]), float(cond[bad[0]]))
        self.condition = cond
        self.coeffs = np.linalg.inv(vand)

    @property
    def direct(self):
        return self.family == "direct" and self.r >= 2

    def spanning(self, ref):
        ref = np.asarray(ref, dtype=float)
        if ref.ndim == 2:
            ref = np.broadcast_to(ref, (len(self.coords),) + ref.shape)
        if self.direct:
            return _direct_spanning(self.geometry, map_points(self.coords, ref), self.r)
        return _mapped_spanning(self.coords, ref, self.r)

    def tabulate(self, ref):
        """Nodal basis values (nc, np, m) and gradients (nc, np, m, 2)."""
        vals, grads = self.spanning(ref)
        return (np.einsum("cpj,cjk->cpk", vals, self.coeffs),
                np.einsum("cpjd,cjk->cpkd", grads, self.coeffs))


def shape_functions(cell_coords, r):
    """Pre-nodal spanning functions of one cell as a callable ``x -> (vals, grads)``."""
    local_dimension(r)
    coords = np.asarray(cell_coords, dtype=float)[None]
    geo = ds_geometry(coords)

    def evaluate(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if r == 1:
            ref = inverse_map(coords[0], pts)
            v, g = _mapped_spanning(coords, ref[None], 1)
        else:
            v, g = _direct_spanning(geo, pts[None], r)
        return v[0], g[0]

    return evaluate


def nodal_basis(cell_coords, r, family="direct"):
    return ElementBasis(np.asarray(cell_coords, dtype=float)[None], r, family)


# ---------------------------------------------------------------------------
# global spaces
# ---------------------------------------------------------------------------

class DSSpace:
    """Continuous DS_r space on a mesh.

    Global numbering: vertex DoFs (vertex ids), then r-1 DoFs per edge in the
    edge's global orientation, then interior DoFs cell by cell.
    """

    def __init__(self, mesh, r, family="direct"):
        self.mesh = mesh
        self.r = int(r)
        self.family = family
        self.element = ElementBasis(mesh.coords, r, family)
        self.n_local = self.element.dim
        nv, ne, nc = mesh.n_vertices, mesh.n_edges, mesh.n_cells
        ned = max(r - 1, 0)
        nin = n_interior(r)
        cols = [mesh.cells]
        if ned:
            j = np.arange(ned)
            for k in range(4):
                g = mesh.cell_edges[:, k]
                o = mesh.cell_edge_orient[:, k]
                jj = np.where(o[:, None] > 0, j[None, :], ned - 1 - j[None, :])
                cols.append(nv + g[:, None] * ned + jj)
        if nin:
            cols.append(nv + ne * ned + np.arange(nc)[:, None] * nin + np.arange(nin)[None, :])
        self.dofmap = np.hstack(cols).astype(np.int64)
        self.cont_dofmap = self.dofmap
        self.ndof = nv + ne * ned + nc * nin
        self.n_continuous = self.ndof

    def tabulate(self, ref, cells=None):
        if cells is None:
            return self.element.tabulate(ref)
        sub = ElementBasis.__new__(ElementBasis)
        el = self.element
        sub.coords, sub.r, sub.family, sub.dim = el.coords[cells], el.r, el.family, el.dim
        sub.geometry = ds_geometry(sub.coords)
        sub.coeffs = el.coeffs[cells]
        return sub.tabulate(ref)

    def interpolate(self, func):
        """Nodal interpolant of ``func(points (n, 2)) -> (n,)``."""
        nodes = self.element.nodes
        vals = np.asarray(func(nodes.reshape(-1, 2)), dtype=float).reshape(nodes.shape[:2])
        u = np.zeros(self.ndof)
        u[self.cont_dofmap] = vals
        return u

    def boundary_dofs(self, edges=None):
        mesh = self.mesh
        edges = mesh.boundary_edges if edges is None else np.asarray(edges, dtype=np.int64)
        ned = max(self.r - 1, 0)
        dofs = [mesh.edges[edges].ravel()]
        if ned:
            dofs.append((mesh.n_vertices + edges[:, None] * ned + np.arange(ned)).ravel())
        return np.unique(np.concatenate(dofs))

    def evaluate(self, u, cell, point):
        """Value and gradient of the field ``u`` at one physical point of ``cell``."""
        coords = self.mesh.coords[cell]
        ref = inverse_map(coords, np.atleast_2d(point))
        if np.any(np.abs(ref) > 1.0 + 1e-9):
            raise PointOutsideCell(f"point {point} is not inside cell {cell}")
        vals, grads = self.tabulate(ref, cells=np.array([cell]))
        coef = np.append(u, 0.0)[self.dofmap[cell]]
        return float(vals[0, 0] @ coef), grads[0, 0].T @ coef


class EGSpace(DSSpace):
    """Enriched Galerkin space: DS_r plus one indicator per cell.

    The indicator of cell 0 is omitted so the basis is linearly independent;
    its slot in ``dofmap`` is -1. ``raw_ndof`` counts every indicator.
    """

    def __init__(self, mesh, r, family="direct"):
        super().__init__(mesh, r, family)
        nc = mesh.n_cells
        enr = self.n_continuous + np.arange(nc) - 1
        enr[0] = -1
        self.enrichment_dofs = enr
        self.dofmap = np.hstack([self.dofmap, enr[:, None]])
        self.n_local = self.element.dim + 1
        self.ndof = self.n_continuous + nc - 1
        self.raw_ndof = self.n_continuous + nc

    def tabulate(self, ref, cells=None):
        vals, grads = super().tabulate(ref, cells)
        ones = np.ones(vals.shape[:2] + (1,))
        return (np.concatenate([vals, ones], axis=-1),
                np.concatenate([grads, np.zeros(grads.shape[:2] + (1, 2))], axis=-2))

    def interpolate(self, func):
        u = super().interpolate(func)
        return u

    def cell_averages(self, u, rule):
        """Mean value of ``u`` on each cell using quadrature ``rule``."""
        vals, _ = self.tabulate(rule.points)
        _, det = jacobians(self.mesh.coords, rule.points)
        coef = np.append(u, 0.0)[self.dofmap]
        w = det * rule.weights
        return np.einsum("cp,cpk,ck->c", w, vals, coef) / w.sum(axis=1)


def build_ds_space(mesh, r, family="direct"):
    return DSSpace(mesh, r, family)


def build_eg_space(mesh, r, family="direct"):
    return EGSpace(mesh, r, family)


def ds_global_dimension(n, r):
    """Continuous DS_r dimension on an n x n grid (vertex + edge + interior count)."""
    return (n + 1) ** 2 + 2 * n * (n + 1) * (r - 1) + n * n * n_interior(r)


def eg_raw_dimension(n, r):
    return ds_global_dimension(n, r) + n * n

