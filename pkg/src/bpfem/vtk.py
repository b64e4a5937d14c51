"""Legacy ASCII VTK output of nodal fields."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .fe_space import P2, FeSpace

VTK_TRIANGLE = 5
VTK_QUAD = 9

# P2 triangle split into four P1 triangles through its edge midpoints
_P2_SUBCELLS = np.array([[0, 5, 4], [5, 1, 3], [4, 3, 2], [5, 3, 4]])


def visualization_cells(space: FeSpace):
    """Linear cells over the Lagrange nodes and their VTK type id."""
    if space.kind == P2:
        cells = space.cell_dofs[:, _P2_SUBCELLS].reshape(-1, 3)
        return cells, VTK_TRIANGLE
    if space.cell_dofs.shape[1] == 3:
        return space.cell_dofs, VTK_TRIANGLE
    return space.cell_dofs, VTK_QUAD


def write_vtk(path, space: FeSpace, values, name: str = "u_plus", title: str = "bpfem field"):
    path = Path(path)
    values = np.asarray(values, dtype=float)
    if values.shape != (space.num_dofs,):
        raise ValueError("one value per dof expected")
    cells, ctype = visualization_cells(space)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {space.num_dofs} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in space.dof_coords]
    nloc = cells.shape[1]
    lines.append(f"CELLS {len(cells)} {len(cells) * (nloc + 1)}")
    lines += [" ".join(map(str, (nloc, *c))) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(ctype)] * len(cells)
    lines += [f"POINT_DATA {space.num_dofs}", f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    lines += [f"{v:.17g}" for v in values]
    try:
        path.write_text("\n".join(lines) + "\n", encoding="ascii")
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc}") from exc
    return path
