"""AC mixed elements on quadrilaterals and the edge multiplier space.

The polynomial blocks are built in scaled physical coordinates
``X = (x - c_E) / h_E``; only the supplemental vectors are Piola mapped from
the reference square. No H(div) conforming global space is assembled: normal
continuity is imposed weakly by the multipliers of the hybrid formulation.
"""

import numpy as np
from numpy.polynomial import legendre

from .errors import InvalidIndex
from .mesh import jacobians, map_points, reference_edge_points
from .quadrature import edge_quadrature_rule

FULL = "full"
REDUCED = "reduced"


def _monomials(X, degree, homogeneous=False):
    """Scaled monomials X^a Y^b and their X-derivatives (unscaled by h)."""
    x, y = X[..., 0], X[..., 1]
    degs = [degree] if homogeneous else range(degree + 1)
    vals, dx, dy = [], [], []
    for d in degs:
        for b in range(d + 1):
            a = d - b
            vals.append(x**a * y**b)
            dx.append(a * x ** max(a - 1, 0) * y**b if a else np.zeros_like(x))
            dy.append(b * x**a * y ** max(b - 1, 0) if b else np.zeros_like(x))
    return vals, dx, dy


def reference_supplements(s, ref):
    """Reference supplemental vectors (curls of the generators) at ``ref`` (..., 2).

    Returns an array (..., k, 2) with k = 1 for s = 0 and k = 2 otherwise.
    """
    ref = np.asarray(ref, dtype=float)
    xh, yh = ref[..., 0], ref[..., 1]
    if s == 0:
        return np.stack([np.stack([xh, -yh], axis=-1)], axis=-2)

    def g(t):
        return t ** (s - 1) - t ** (s + 1)

    def dg(t):
        lead = (s - 1) * t ** (s - 2) if s >= 2 else np.zeros_like(t)
        return lead - (s + 1) * t**s

    sig1 = np.stack([g(xh), -dg(xh) * yh], axis=-1)
    sig2 = np.stack([xh * dg(yh), -g(yh)], axis=-1)
    return np.stack([sig1, sig2], axis=-2)


def velocity_dimension(s, variant=FULL):
    if variant == REDUCED:
        if s < 1:
            raise InvalidIndex("the reduced AC family needs s >= 1")
        return (s + 1) * (s + 2) + 2
    if variant != FULL:
        raise ValueError(f"unknown AC variant {variant!r}")
    if s < 0:
        raise InvalidIndex("s must be >= 0")
    return (s + 1) * (s + 2) + (s + 1) + (2 if s >= 1 else 1)


def pressure_dimension(s, variant=FULL):
    k = s if variant == FULL else s - 1
    return (k + 1) * (k + 2) // 2


class ACSpace:
    """Broken AC_s velocity space and companion pressure space on a mesh."""

    def __init__(self, mesh, s, variant=FULL):
        self.mesh = mesh
        self.s = int(s)
        self.variant = variant
        self.n_velocity = velocity_dimension(s, variant)
        self.n_pressure = pressure_dimension(s, variant)
        self.pressure_degree = s if variant == FULL else s - 1
        self.center = mesh.coords.mean(axis=1)
        self.h = np.asarray(mesh.diameters)

    def _scaled(self, ref, cells):
        coords = self.mesh.coords[cells]
        x = map_points(coords, ref)
        X = (x - self.center[cells][:, None, :]) / self.h[cells][:, None, None]
        return coords, X

    def tabulate(self, ref, cells=None):
        """Velocity basis values (nc, np, m, 2) and divergences (nc, np, m)."""
        cells = np.arange(self.mesh.n_cells) if cells is None else np.asarray(cells)
        ref = np.asarray(ref, dtype=float)
        if ref.ndim == 2:
            ref = np.broadcast_to(ref, (len(cells),) + ref.shape)
        coords, X = self._scaled(ref, cells)
        hinv = (1.0 / self.h[cells])[:, None]
        p, px, py = _monomials(X, self.s)
        zero = np.zeros_like(X[..., 0])
        vecs, divs = [], []
        for v, dx in zip(p, px):
            vecs.append(np.stack([v, zero], axis=-1))
            divs.append(dx * hinv)
        for v, dy in zip(p, py):
            vecs.append(np.stack([zero, v], axis=-1))
            divs.append(dy * hinv)
        if self.variant == FULL:
            q, _, _ = _monomials(X, self.s, homogeneous=True)
            for v in q:
                vecs.append(X * v[..., None])
                divs.append((self.s + 2) * v * hinv)
        jac, det = jacobians(coords, ref)
        sup = reference_supplements(self.s, ref)
        phys = np.einsum("cpij,cpkj->cpki", jac, sup) / det[..., None, None]
        phys = phys * self.h[cells][:, None, None, None]
        for k in range(sup.shape[-2]):
            vecs.append(phys[..., k, :])
            divs.append(zero)
        return np.stack(vecs, axis=-2), np.stack(divs, axis=-1)

    def tabulate_pressure(self, ref, cells=None):
        """Pressure basis values (nc, np, mw) and gradients (nc, np, mw, 2)."""
        cells = np.arange(self.mesh.n_cells) if cells is None else np.asarray(cells)
        ref = np.asarray(ref, dtype=float)
        if ref.ndim == 2:
            ref = np.broadcast_to(ref, (len(cells),) + ref.shape)
        _, X = self._scaled(ref, cells)
        p, px, py = _monomials(X, self.pressure_degree)
        hinv = (1.0 / self.h[cells])[:, None, None]
        grads = np.stack([np.stack(px, -1), np.stack(py, -1)], -1) * hinv[..., None]
        return np.stack(p, axis=-1), grads


def ac_basis(mesh, s, variant=FULL):
    return ACSpace(mesh, s, variant)


def supplements(space, ref, cells=None):
    """Physical supplemental vectors (nc, np, k, 2) of an ``ACSpace``."""
    vals, _ = space.tabulate(ref, cells)
    k = 1 if space.s == 0 else 2
    return vals[..., -k:, :]


class TraceSpace:
    """Legendre modes of degree <= s on every edge not in the Dirichlet set.

    ``dofs[g]`` holds the s+1 global indices of edge g (or -1). Mode l on
    edge g is ``P_l(t)`` with t running from ``edges[g, 0]`` to
    ``edges[g, 1]``.
    """

    def __init__(self, mesh, s, dirichlet_tags=()):
        self.mesh = mesh
        self.s = int(s)
        dirichlet_tags = set(dirichlet_tags)
        active = np.array([t not in dirichlet_tags for t in mesh.edge_tags])
        self.active = active
        self.n_modes = s + 1
        idx = np.full(mesh.n_edges, -1, dtype=np.int64)
        idx[active] = np.arange(active.sum())
        self.edge_block = idx
        self.dofs = np.where(active[:, None], idx[:, None] * self.n_modes + np.arange(self.n_modes), -1)
        self.ndof = int(active.sum()) * self.n_modes
        self.n_blocks = int(active.sum())

    def cell_dofmap(self):
        """(nc, 4*(s+1)) multiplier dofs per cell, local ccw edge-major."""
        return self.dofs[self.mesh.cell_edges].reshape(self.mesh.n_cells, -1)


def build_trace_space(mesh, s, dirichlet_tags=()):
    return TraceSpace(mesh, s, dirichlet_tags)


def legendre_modes(t, n):
    """P_0..P_{n-1} at t (..., ) -> (..., n)."""
    return legendre.legvander(np.asarray(t, dtype=float), n - 1)


def edge_tables(space, order, cells=None):
    """Velocity normal traces on the four local edges of each cell.

    Returns ``(vn, w, tau)`` where ``vn`` is (nc, 4, nq, m) with v . n_dE
    (outward), ``w`` is (nc, 4, nq) physical quadrature weights and ``tau`` the
    1D reference points (ccw parameter).
    """
    mesh = space.mesh
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    rule = edge_quadrature_rule(order)
    vn, w = [], []
    for k in range(4):
        ref = reference_edge_points(k, rule.points)
        vals, _ = space.tabulate(ref, cells)
        n = mesh.cell_edge_normals[cells, k]
        vn.append(np.einsum("cpmd,cd->cpm", vals, n))
        w.append(0.5 * mesh.cell_edge_lengths[cells, k][:, None] * rule.weights[None, :])
    return np.stack(vn, axis=1), np.stack(w, axis=1), rule.points


def edge_flux_moments(space, trace, order=None, cells=None):
    """Per-cell matrices L[c, i, (k, l)] = int_{e_k} v_i . n_dE P_l ds (all four edges).

    Columns of Dirichlet edges are kept; callers mask them with the trace
    dofmap.
    """
    mesh = space.mesh
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    order = 2 * space.s + 2 if order is None else order
    vn, w, tau = edge_tables(space, order, cells)
    nm = trace.n_modes
    orient = mesh.cell_edge_orient[cells]
    P = legendre_modes(tau, nm)                          # (nq, nm)
    sign = orient[:, :, None].astype(float) ** np.arange(nm)  # P_l(-t) = (-1)^l P_l(t)
    mom = np.einsum("ckqm,ckq,ql,ckl->ckml", vn, w, P, sign)
    return mom.transpose(0, 2, 1, 3).reshape(len(cells), space.n_velocity, 4 * nm)
