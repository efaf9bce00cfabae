"""Conforming convex quadrilateral meshes and the bilinear reference map.

Cells are stored with counterclockwise vertices ``v0..v3``. Local edge ``k``
runs from ``v_k`` to ``v_{k+1}``. The reference square is [-1, 1]^2 with
``v0 -> (-1,-1)``, ``v1 -> (1,-1)``, ``v2 -> (1,1)``, ``v3 -> (-1,1)``.

The opposite-edge labelling used by the serendipity construction is

    e1 = local edge 3 (v3 -> v0)      e2 = local edge 1 (v1 -> v2)
    e3 = local edge 0 (v0 -> v1)      e4 = local edge 2 (v2 -> v3)

so that v0 = e1 n e3, v1 = e2 n e3, v2 = e2 n e4 and v3 = e1 n e4.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateCell,
    DistortionTooLarge,
    MeshError,
    NonConformingMesh,
    NonConvexCell,
    NonPositiveJacobian,
    ParseError,
    PointOutsideCell,
)
from .quadrature import quadrature_rule

# local (ccw) edge index of e1, e2, e3, e4
FIG2_EDGES = np.array([3, 1, 0, 2])

REF_VERTICES = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])

INTERIOR = "interior"
DEFAULT_BOUNDARY_TAG = "boundary"


# ---------------------------------------------------------------------------
# bilinear map kernels (vectorised over cells and points)
# ---------------------------------------------------------------------------

def bilinear_shapes(ref):
    """Values (..., 4) and reference gradients (..., 4, 2) of the Q1 shapes."""
    ref = np.asarray(ref, dtype=float)
    xh, yh = ref[..., 0], ref[..., 1]
    sx = REF_VERTICES[:, 0]
    sy = REF_VERTICES[:, 1]
    ax = 1.0 + xh[..., None] * sx
    ay = 1.0 + yh[..., None] * sy
    vals = 0.25 * ax * ay
    grads = np.stack([0.25 * sx * ay, 0.25 * ax * sy], axis=-1)
    return vals, grads


def _broadcast_ref(coords, ref):
    ref = np.asarray(ref, dtype=float)
    if ref.ndim == 2:
        ref = np.broadcast_to(ref, (coords.shape[0],) + ref.shape)
    return ref


def map_points(coords, ref):
    """Map reference points to physical points.

    ``coords`` is (nc, 4, 2); ``ref`` is (np, 2) shared by all cells or
    (nc, np, 2). Returns (nc, np, 2).
    """
    coords = np.asarray(coords, dtype=float)
    ref = _broadcast_ref(coords, ref)
    vals, _ = bilinear_shapes(ref)
    return np.einsum("cpk,ckd->cpd", vals, coords)


def jacobians(coords, ref):
    """Jacobian matrices (nc, np, 2, 2) with ``J[.., i, j] = dx_i / dxhat_j``
    and their determinants (nc, np)."""
    coords = np.asarray(coords, dtype=float)
    ref = _broadcast_ref(coords, ref)
    _, grads = bilinear_shapes(ref)
    jac = np.einsum("ckd,cpkj->cpdj", coords, grads)
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    return jac, det


def inverse_map(coords, points, tol=1e-13, maxiter=50):
    """Newton inversion of the bilinear map for one cell.

    ``coords`` is (4, 2), ``points`` is (np, 2). Returns reference points
    (np, 2). Points outside the cell map outside [-1, 1]^2.
    """
    coords = np.asarray(coords, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ref = np.zeros_like(pts)
    scale = max(np.ptp(coords[:, 0]), np.ptp(coords[:, 1]))
    for _ in range(maxiter):
        x = map_points(coords[None], ref[None])[0]
        jac, det = jacobians(coords[None], ref[None])
        jac, det = jac[0], det[0]
        res = x - pts
        # 2x2 inverse applied pointwise
        dx = (jac[:, 1, 1] * res[:, 0] - jac[:, 0, 1] * res[:, 1]) / det
        dy = (-jac[:, 1, 0] * res[:, 0] + jac[:, 0, 0] * res[:, 1]) / det
        ref = ref - np.column_stack([dx, dy])
        if np.max(np.abs(res)) <= tol * scale:
            break
    return ref


@dataclass(frozen=True)
class BilinearMap:
    """The map F_E from [-1, 1]^2 onto one quadrilateral cell."""

    cell: int
    vertices: np.ndarray

    def __call__(self, ref_point):
        return map_to_physical(self, ref_point)

    def jacobian(self, ref_point):
        return jacobian(self, ref_point)

    def inverse(self, point):
        return inverse_map(self.vertices, point)


def map_to_physical(bmap, ref_point):
    ref = np.asarray(ref_point, dtype=float)
    out = map_points(bmap.vertices[None], ref.reshape(1, -1, 2))[0]
    return out.reshape(ref.shape)


def jacobian(bmap, ref_point):
    """Return ``(J, det J)`` at one or several reference points."""
    ref = np.asarray(ref_point, dtype=float)
    jac, det = jacobians(bmap.vertices[None], ref.reshape(1, -1, 2))
    if np.any(det <= 0.0):
        bad = ref.reshape(-1, 2)[np.argmin(det[0])]
        raise NonPositiveJacobian(bmap.cell, tuple(bad))
    if ref.ndim == 1:
        return jac[0, 0], det[0, 0]
    return jac[0], det[0]


def piola_transform(bmap, ref_vector, ref_point):
    """Contravariant Piola map ``v = J vhat / det J`` evaluated at ``F(ref_point)``.

    ``ref_vector`` is either an array of reference vectors matching
    ``ref_point`` or a callable ``vhat(ref_points) -> (..., 2)``.
    """
    ref = np.asarray(ref_point, dtype=float)
    vhat = ref_vector(ref) if callable(ref_vector) else np.asarray(ref_vector, dtype=float)
    jac, det = jacobian(bmap, ref)
    return np.einsum("...ij,...j->...i", jac, vhat) / np.asarray(det)[..., None]


# ---------------------------------------------------------------------------
# per-cell geometry
# ---------------------------------------------------------------------------

def reference_edge_points(local_edge, tau):
    """Reference coordinates of the point with parameter ``tau`` on local edge
    ``local_edge``, traversed counterclockwise."""
    tau = np.asarray(tau, dtype=float)
    one = np.ones_like(tau)
    if local_edge == 0:
        return np.stack([tau, -one], axis=-1)
    if local_edge == 1:
        return np.stack([one, tau], axis=-1)
    if local_edge == 2:
        return np.stack([-tau, one], axis=-1)
    if local_edge == 3:
        return np.stack([-one, -tau], axis=-1)
    raise ValueError(f"local edge index must be 0..3, got {local_edge}")


def outward_normals(coords):
    """Outward unit normals (nc, 4, 2) and lengths (nc, 4) of the local edges."""
    coords = np.asarray(coords, dtype=float)
    d = np.roll(coords, -1, axis=-2) - coords
    length = np.hypot(d[..., 0], d[..., 1])
    n = np.stack([d[..., 1], -d[..., 0]], axis=-1) / length[..., None]
    return n, length


def edge_distance_functions(coords):
    """Affine distance functionals l_1..l_4 of a cell (Fig. 2 edge order).

    Returns ``(normals, anchors)``, each (4, 2) (or (nc, 4, 2) for a batch):
    ``l_i(x) = -(x - anchors[i]) . normals[i]`` with constant gradient
    ``-normals[i]``.
    """
    coords = np.asarray(coords, dtype=float)
    n, _ = outward_normals(coords)
    return n[..., FIG2_EDGES, :], coords[..., FIG2_EDGES, :]


def eval_distance(normals, anchors, points):
    """Evaluate all four l_i at ``points`` (..., 2) -> (..., 4)."""
    diff = np.asarray(points, dtype=float)[..., None, :] - anchors
    return -np.sum(diff * normals, axis=-1)


def cell_diameters(coords):
    coords = np.asarray(coords, dtype=float)
    diff = coords[..., :, None, :] - coords[..., None, :, :]
    return np.sqrt(np.max(np.sum(diff**2, axis=-1), axis=(-1, -2)))


def shoelace_area(coords):
    x = coords[..., 0]
    y = coords[..., 1]
    return 0.5 * np.sum(x * np.roll(y, -1, axis=-1) - np.roll(x, -1, axis=-1) * y, axis=-1)


def shape_regularity(coords):
    """min over the four vertex-dropped sub-triangles of (inscribed diameter / h_E)."""
    coords = np.asarray(coords, dtype=float)
    h = cell_diameters(coords)
    worst = np.full(coords.shape[:-2], np.inf)
    for drop in range(4):
        tri = np.delete(coords, drop, axis=-2)
        a = tri[..., 1, :] - tri[..., 0, :]
        b = tri[..., 2, :] - tri[..., 0, :]
        area = 0.5 * np.abs(a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0])
        sides = np.linalg.norm(tri - np.roll(tri, -1, axis=-2), axis=-1).sum(axis=-1)
        inscribed = 4.0 * area / sides
        worst = np.minimum(worst, inscribed / h)
    return worst


def convexity_crosses(coords):
    """Cross products of consecutive edge vectors (nc, 4); all > 0 iff strictly convex (ccw)."""
    d = np.roll(coords, -1, axis=-2) - coords
    dn = np.roll(d, -1, axis=-2)
    return d[..., 0] * dn[..., 1] - d[..., 1] * dn[..., 0]


# ---------------------------------------------------------------------------
# mesh container
# ---------------------------------------------------------------------------

def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class Mesh:
    """Immutable conforming mesh of strictly convex quadrilaterals.

    Edge ``g`` is oriented along the counterclockwise traversal of
    ``edge_cells[g, 0]`` (the cell E_i); ``edge_normals[g]`` points from E_i
    to E_j, or outward on the boundary.
    """

    def __init__(self, vertices, cells, edges, edge_cells, edge_local, edge_tags,
                 cell_edges, cell_edge_orient):
        self.vertices = _frozen(np.asarray(vertices, dtype=float))
        self.cells = _frozen(np.asarray(cells, dtype=np.int64))
        self.edges = _frozen(edges)
        self.edge_cells = _frozen(edge_cells)
        self.edge_local = _frozen(edge_local)
        self.edge_tags = tuple(edge_tags)
        self.cell_edges = _frozen(cell_edges)
        self.cell_edge_orient = _frozen(cell_edge_orient)

        self.coords = _frozen(self.vertices[self.cells])
        normals, lengths = outward_normals(self.coords)
        self.cell_edge_normals = _frozen(normals)
        self.cell_edge_lengths = _frozen(lengths)
        g0 = self.edge_cells[:, 0]
        k0 = self.edge_local[:, 0]
        self.edge_normals = _frozen(normals[g0, k0])
        self.edge_lengths = _frozen(lengths[g0, k0])
        self.diameters = _frozen(cell_diameters(self.coords))
        self.areas = _frozen(shoelace_area(self.coords))
        self.centers = _frozen(self.coords.mean(axis=1))
        self.regularity = _frozen(shape_regularity(self.coords))
        self.interior_edges = _frozen(np.flatnonzero(self.edge_cells[:, 1] >= 0))
        self.boundary_edges = _frozen(np.flatnonzero(self.edge_cells[:, 1] < 0))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def h_max(self):
        return float(self.diameters.max())

    @property
    def h_min(self):
        return float(self.diameters.min())

    @property
    def shape_regularity(self):
        return float(self.regularity.min())

    @property
    def cell_fig2_edges(self):
        """Global edge ids of each cell in (e1, e2, e3, e4) order."""
        return self.cell_edges[:, FIG2_EDGES]

    @property
    def boundary_tags(self):
        return sorted({self.edge_tags[g] for g in self.boundary_edges})

    def edges_with_tag(self, tag):
        return np.array([g for g in self.boundary_edges if self.edge_tags[g] == tag], dtype=np.int64)

    def bilinear_map(self, cell):
        return BilinearMap(int(cell), self.coords[cell])

    def cell_area_by_quadrature(self, order=2):
        rule = quadrature_rule(order)
        _, det = jacobians(self.coords, rule.points)
        return det @ rule.weights

    def locate(self, points, tol=1e-12):
        """Index of a cell containing each point, or -1."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(len(pts), -1, dtype=np.int64)
        lo = self.coords.min(axis=1)
        hi = self.coords.max(axis=1)
        normals = self.cell_edge_normals
        scale = tol * self.h_max
        for start in range(0, len(pts), 256):
            chunk = pts[start:start + 256]
            inbox = np.all((chunk[:, None, :] >= lo - scale) & (chunk[:, None, :] <= hi + scale), axis=-1)
            for ip, cands in enumerate(inbox):
                for c in np.flatnonzero(cands):
                    d = np.einsum("kd,kd->k", chunk[ip] - self.coords[c], normals[c])
                    if np.all(d <= scale):
                        out[start + ip] = c
                        break
        return out

    def to_reference(self, cell, points):
        """Reference coordinates of physical ``points`` in ``cell``."""
        ref = inverse_map(self.coords[cell], points)
        if np.any(np.abs(ref) > 1.0 + 1e-9):
            raise PointOutsideCell(f"point(s) {points} not inside cell {cell}")
        return np.clip(ref, -1.0, 1.0)

    def summary(self):
        n_int = len(self.interior_edges)
        return {
            "vertices": self.n_vertices,
            "cells": self.n_cells,
            "interior_edges": n_int,
            "boundary_edges": self.n_edges - n_int,
            "h_min": self.h_min,
            "h_max": self.h_max,
            "shape_regularity": self.shape_regularity,
            "boundary_tags": self.boundary_tags,
        }


def build_mesh(vertices, cell_connectivity, boundary_tags=None):
    """Validate connectivity and build the skeleton.

    Parameters
    ----------
    vertices : array_like, shape (nv, 2)
    cell_connectivity : array_like, shape (nc, 4)
        Counterclockwise vertex indices per cell.
    boundary_tags : mapping or iterable, optional
        ``{(va, vb): tag}`` or an iterable of ``(va, vb, tag)``. Untagged
        boundary edges get the tag ``"boundary"``.
    """
    vertices = np.asarray(vertices, dtype=float)
    cells = np.asarray(cell_connectivity, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshError("vertices must have shape (nv, 2)")
    if not np.all(np.isfinite(vertices)):
        raise MeshError("vertex coordinates must be finite")
    if cells.ndim != 2 or cells.shape[1] != 4 or len(cells) == 0:
        raise MeshError("need at least one cell with 4 vertex indices")
    if cells.min() < 0 or cells.max() >= len(vertices):
        raise MeshError("cell connectivity index out of range")

    coords = vertices[cells]
    area = shoelace_area(coords)
    scale = cell_diameters(coords) ** 2
    for c in np.flatnonzero(np.abs(area) <= 1e-14 * np.maximum(scale, 1e-300)):
        raise DegenerateCell(int(c))
    crosses = convexity_crosses(coords)
    for c in np.flatnonzero(np.any(crosses <= 0.0, axis=1)):
        raise NonConvexCell(int(c))

    edge_index = {}
    edges, edge_cells, edge_local = [], [], []
    cell_edges = np.empty((len(cells), 4), dtype=np.int64)
    orient = np.empty((len(cells), 4), dtype=np.int64)
    for c, cv in enumerate(cells):
        for k in range(4):
            a, b = int(cv[k]), int(cv[(k + 1) % 4])
            key = (a, b) if a < b else (b, a)
            g = edge_index.get(key)
            if g is None:
                g = len(edges)
                edge_index[key] = g
                edges.append((a, b))
                edge_cells.append([c, -1])
                edge_local.append([k, -1])
                orient[c, k] = 1
            else:
                if edge_cells[g][1] >= 0:
                    raise NonConformingMesh(key, f"edge {key} is shared by more than two cells")
                if edges[g] != (b, a):
                    raise NonConformingMesh(key, f"edge {key} traversed twice in the same direction")
                edge_cells[g][1] = c
                edge_local[g][1] = k
                orient[c, k] = -1
            cell_edges[c, k] = g

    edge_cells = np.array(edge_cells, dtype=np.int64)
    tags = [INTERIOR if ec[1] >= 0 else DEFAULT_BOUNDARY_TAG for ec in edge_cells]
    if boundary_tags is not None:
        items = boundary_tags.items() if hasattr(boundary_tags, "items") else (
            ((a, b), t) for a, b, t in boundary_tags)
        for (a, b), tag in items:
            key = (int(a), int(b)) if a < b else (int(b), int(a))
            g = edge_index.get(key)
            if g is None or edge_cells[g, 1] >= 0:
                raise NonConformingMesh(key, f"tagged pair {key} is not a boundary edge")
            tags[g] = str(tag)

    return Mesh(vertices, cells, np.array(edges, dtype=np.int64), edge_cells,
                np.array(edge_local, dtype=np.int64), tags, cell_edges, orient)


def retag(mesh, tagger):
    """Return a copy of ``mesh`` with boundary tags ``tagger(midpoint, old_tag)``."""
    tags = {}
    for g in mesh.boundary_edges:
        a, b = mesh.edges[g]
        mid = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
        tags[(int(a), int(b))] = tagger(mid, mesh.edge_tags[g])
    return build_mesh(mesh.vertices, mesh.cells, tags)


def boundary_edge_list(mesh):
    return [(int(mesh.edges[g, 0]), int(mesh.edges[g, 1]), mesh.edge_tags[g]) for g in mesh.boundary_edges]


# ---------------------------------------------------------------------------
# generators and I/O
# ---------------------------------------------------------------------------

def _side_tagger(x0, x1, y0, y1):
    tol = 1e-10 * max(x1 - x0, y1 - y0)

    def tag(mid, _old):
        if abs(mid[0] - x0) < tol:
            return "left"
        if abs(mid[0] - x1) < tol:
            return "right"
        if abs(mid[1] - y0) < tol:
            return "bottom"
        if abs(mid[1] - y1) < tol:
            return "top"
        return DEFAULT_BOUNDARY_TAG

    return tag


def _grid_cells(nx, ny):
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    v0 = (i * (ny + 1) + j).ravel()
    return np.column_stack([v0, v0 + ny + 1, v0 + ny + 2, v0 + 1])


def generate_distorted_grid(nx, ny, domain_rect=(0.0, 1.0, 0.0, 1.0), distortion_fraction=0.0,
                            rng_seed=0, max_redraws=200):
    """Uniform ``nx`` x ``ny`` grid with randomly perturbed interior vertices.

    Each interior vertex coordinate moves by at most
    ``distortion_fraction`` times the local grid spacing; boundary vertices
    stay fixed. Vertices of cells that come out non-convex are redrawn.
    Boundary edges are tagged left/right/bottom/top.
    """
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be >= 1")
    if not 0.0 <= distortion_fraction < 0.5:
        raise MeshError("distortion_fraction must lie in [0, 0.5)")
    x0, x1, y0, y1 = map(float, domain_rect)
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
    xs, ys = np.meshgrid(np.linspace(x0, x1, nx + 1), np.linspace(y0, y1, ny + 1), indexing="ij")
    base = np.column_stack([xs.ravel(), ys.ravel()])
    cells = _grid_cells(nx, ny)
    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="ij")
    interior = ((ii > 0) & (ii < nx) & (jj > 0) & (jj < ny)).ravel()

    rng = np.random.default_rng(rng_seed)
    verts = base.copy()
    amp = distortion_fraction * np.array([hx, hy])

    def draw(mask):
        idx = np.flatnonzero(mask)
        verts[idx] = base[idx] + rng.uniform(-1.0, 1.0, size=(len(idx), 2)) * amp

    if distortion_fraction > 0.0:
        draw(interior)
        for _ in range(max_redraws):
            bad = np.any(convexity_crosses(verts[cells]) <= 1e-12 * hx * hy, axis=1)
            if not bad.any():
                break
            redo = np.zeros(len(verts), dtype=bool)
            redo[cells[bad].ravel()] = True
            draw(redo & interior)
        else:
            raise DistortionTooLarge("could not obtain convex cells; reduce distortion_fraction")

    mesh = build_mesh(verts, cells)
    return retag(mesh, _side_tagger(x0, x1, y0, y1))


def uniform_grid(nx, ny, domain_rect=(0.0, 1.0, 0.0, 1.0)):
    return generate_distorted_grid(nx, ny, domain_rect, 0.0)


def square_with_hole(level, radius=0.2, center=(0.5, 0.5)):
    """O-grid mesh of the unit square minus a disc.

    Four blocks (one per square side) of ``2**(level+1)`` tangential by
    ``2**level`` radial cells; level 2 gives 128 cells and level 5 gives
    8192. Boundary tags: left, right, bottom, top, hole.
    """
    nt = 2 ** (level + 1)
    nr = 2 ** level
    ntot = 4 * nt
    cx, cy = center
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    i = np.arange(ntot)
    side, frac = i // nt, (i % nt) / nt
    outer = corners[side] + frac[:, None] * (corners[(side + 1) % 4] - corners[side])
    theta = np.deg2rad(225.0) + 2.0 * np.pi * i / ntot
    inner = np.column_stack([cx + radius * np.cos(theta), cy + radius * np.sin(theta)])
    rho = np.arange(nr + 1) / nr
    pts = (1.0 - rho[None, :, None]) * inner[:, None, :] + rho[None, :, None] * outer[:, None, :]
    verts = pts.reshape(-1, 2)

    def vid(ti, rj):
        return (ti % ntot) * (nr + 1) + rj

    ti, rj = np.meshgrid(np.arange(ntot), np.arange(nr), indexing="ij")
    ti, rj = ti.ravel(), rj.ravel()
    cells = np.column_stack([vid(ti, rj), vid(ti, rj + 1), vid(ti + 1, rj + 1), vid(ti + 1, rj)])
    names = ["bottom", "right", "top", "left"]
    tags = []
    for t in range(ntot):
        tags.append((vid(t, 0), vid(t + 1, 0), "hole"))
        tags.append((vid(t, nr), vid(t + 1, nr), names[t // nt]))
    return build_mesh(verts, cells, tags)


def write_mesh(mesh, path):
    """Write the plain-text mesh format (see ``read_mesh``)."""
    bnd = boundary_edge_list(mesh)
    lines = [f"{mesh.n_vertices} {mesh.n_cells} {len(bnd)}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [" ".join(str(v) for v in row) for row in mesh.cells.tolist()]
    lines += [f"{a} {b} {t}" for a, b, t in bnd]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_mesh(path):
    """Read the text format

        nv nc nbe
        x y                 (nv lines)
        v0 v1 v2 v3         (nc lines, counterclockwise, 0-based)
        va vb tag           (nbe lines)
    """
    raw = Path(path).read_text(encoding="ascii").splitlines()
    lines = [(i + 1, ln.split()) for i, ln in enumerate(raw) if ln.strip()]
    if not lines:
        raise ParseError(1, "empty file")
    lineno, head = lines[0]
    try:
        nv, nc, nbe = (int(t) for t in head)
    except ValueError:
        raise ParseError(lineno, "expected 'nv nc nbe'") from None
    if len(lines) < 1 + nv + nc + nbe:
        raise ParseError(len(raw), "unexpected end of file")
    pos = 1
    verts = np.empty((nv, 2))
    for k in range(nv):
        lineno, tok = lines[pos + k]
        try:
            if len(tok) != 2:
                raise ValueError
            verts[k] = [float(tok[0]), float(tok[1])]
        except ValueError:
            raise ParseError(lineno, "expected 'x y'") from None
    pos += nv
    cells = np.empty((nc, 4), dtype=np.int64)
    for k in range(nc):
        lineno, tok = lines[pos + k]
        try:
            if len(tok) != 4:
                raise ValueError
            cells[k] = [int(t) for t in tok]
        except ValueError:
            raise ParseError(lineno, "expected four vertex indices") from None
    pos += nc
    tags = []
    for k in range(nbe):
        lineno, tok = lines[pos + k]
        try:
            if len(tok) != 3:
                raise ValueError
            tags.append((int(tok[0]), int(tok[1]), tok[2]))
        except ValueError:
            raise ParseError(lineno, "expected 'va vb tag'") from None
    return build_mesh(verts, cells, tags)


def load_tracer_mesh(level):
    """Square-with-hole mesh shipped with the package."""
    path = Path(__file__).with_name("data") / f"square_hole_L{level}.msh"
    if not path.exists():
        raise FileNotFoundError(f"no shipped square-with-hole mesh for level {level}")
    return read_mesh(path)
