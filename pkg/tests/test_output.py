import numpy as np

from dsflow.output import DIAGNOSTIC_FIELDS, DiagnosticsWriter, read_diagnostics, read_vtk_cell_scalar, write_vtk


def test_vtk_roundtrip(tmp_path, square4):
    vals = np.linspace(-1, 1, square4.n_cells) / 3.0
    p = tmp_path / "f.vtk"
    write_vtk(p, square4, cell_scalars={"S_w": vals}, cell_vectors={"u": np.ones((square4.n_cells, 2))},
              point_scalars={"Phi": np.zeros(square4.n_vertices)})
    assert np.array_equal(read_vtk_cell_scalar(p, "S_w"), vals)
    text = p.read_text()
    assert f"CELLS {square4.n_cells} {5 * square4.n_cells}" in text
    assert f"POINT_DATA {square4.n_vertices}" in text


def test_diagnostics_csv(tmp_path):
    p = tmp_path / "d.csv"
    row = {k: 0.1 * i for i, k in enumerate(DIAGNOSTIC_FIELDS)}
    row["step"], row["n_entropy_limited"] = 1, 3
    with DiagnosticsWriter(p) as w:
        w.write(row)
    with DiagnosticsWriter(p, append=True) as w:
        w.write({**row, "step": 2})
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(DIAGNOSTIC_FIELDS)
    assert len(lines) == 3
    d = read_diagnostics(p)
    assert list(d["step"]) == [1, 2]
    assert d["time"][0] == row["time"]
