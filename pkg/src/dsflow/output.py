"""VTK legacy ASCII writer and diagnostics CSV.

Floats are written with ``repr`` so that files are byte-identical across
runs that produce identical arrays.
"""

import csv
from pathlib import Path

import numpy as np

VTK_QUAD = 9

DIAGNOSTIC_FIELDS = (
    "step", "time", "S_min", "S_max", "mass", "cell_balance", "global_balance",
    "mu_h_max", "n_entropy_limited", "outflow_S",
)


def _fmt(v):
    return repr(float(v))


def write_vtk(path, mesh, cell_scalars=None, point_scalars=None, cell_vectors=None, title="dsflow"):
    """Write an unstructured grid of quads with cell and point data."""
    cell_scalars = cell_scalars or {}
    point_scalars = point_scalars or {}
    cell_vectors = cell_vectors or {}
    nv, nc = mesh.n_vertices, mesh.n_cells
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0.0" for x, y in mesh.vertices]
    lines.append(f"CELLS {nc} {5 * nc}")
    lines += ["4 " + " ".join(str(int(v)) for v in c) for c in mesh.cells]
    lines.append(f"CELL_TYPES {nc}")
    lines += [str(VTK_QUAD)] * nc
    if cell_scalars or cell_vectors:
        lines.append(f"CELL_DATA {nc}")
        for name, vals in cell_scalars.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [_fmt(v) for v in np.asarray(vals, dtype=float)]
        for name, vals in cell_vectors.items():
            lines.append(f"VECTORS {name} double")
            lines += [f"{_fmt(a)} {_fmt(b)} 0.0" for a, b in np.asarray(vals, dtype=float)]
    if point_scalars:
        lines.append(f"POINT_DATA {nv}")
        for name, vals in point_scalars.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [_fmt(v) for v in np.asarray(vals, dtype=float)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_vtk_cell_scalar(path, name):
    """Read back one cell scalar array (used by tests and tools)."""
    text = Path(path).read_text(encoding="ascii").splitlines()
    i = text.index(f"SCALARS {name} double 1")
    n = int(next(t for t in text if t.startswith("CELL_DATA")).split()[1])
    return np.array([float(v) for v in text[i + 2:i + 2 + n]])


class DiagnosticsWriter:
    """Row-per-step CSV with the fixed ``DIAGNOSTIC_FIELDS`` header."""

    def __init__(self, path, append=False):
        self.path = Path(path)
        exists = self.path.exists() and append
        self._fh = open(self.path, "a" if exists else "w", newline="", encoding="ascii")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        if not exists:
            self._writer.writerow(DIAGNOSTIC_FIELDS)

    def write(self, row):
        out = []
        for k in DIAGNOSTIC_FIELDS:
            v = row[k]
            out.append(str(int(v)) if k in ("step", "n_entropy_limited") else _fmt(v))
        self._writer.writerow(out)
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_diagnostics(path):
    with open(path, newline="", encoding="ascii") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in DIAGNOSTIC_FIELDS}
