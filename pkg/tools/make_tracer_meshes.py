"""Regenerate the shipped square-with-hole meshes (levels 1 to 5)."""

from pathlib import Path

from dsflow.mesh import square_with_hole, write_mesh

DATA = Path(__file__).resolve().parents[1] / "src" / "dsflow" / "data"

if __name__ == "__main__":
    for level in range(1, 6):
        mesh = square_with_hole(level)
        write_mesh(mesh, DATA / f"square_hole_L{level}.msh")
        print(f"level {level}: {mesh.n_cells} cells, h_min = {mesh.h_min:.6g}")
