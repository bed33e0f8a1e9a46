"""Legacy ASCII VTK output of a discrete solution, for visual inspection."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..mesh import REF_VERTICES
from ..space import FESpace

VTK_TETRA = 10


def point_displacement(v_space: FESpace, u: np.ndarray) -> np.ndarray:
    """Displacement at mesh vertices, averaged over the incident cells
    (the field is only tangentially continuous)."""
    mesh = v_space.mesh
    vals = v_space.evaluate(u, REF_VERTICES)
    out = np.zeros((mesh.num_vertices, 3))
    count = np.zeros(mesh.num_vertices)
    np.add.at(out, mesh.cells.ravel(), vals.reshape(-1, 3))
    np.add.at(count, mesh.cells.ravel(), 1.0)
    return out / count[:, None]


def stress_invariants(sigma_space: FESpace, sigma: np.ndarray) -> dict[str, np.ndarray]:
    """Cellwise trace, von Mises stress and largest principal stress at the
    cell centroid."""
    centroid = REF_VERTICES.mean(axis=0)[None]
    s = sigma_space.evaluate(sigma, centroid)[:, 0]
    tr = np.trace(s, axis1=1, axis2=2)
    dev = s - tr[:, None, None] / 3.0 * np.eye(3)
    mises = np.sqrt(1.5 * np.sum(dev * dev, axis=(1, 2)))
    principal = np.linalg.eigvalsh(s)[:, -1]
    return {"sigma_trace": tr, "von_mises": mises, "sigma_max_principal": principal}


def write_solution_vtk(path, sigma_space: FESpace, v_space: FESpace, sigma: np.ndarray, u: np.ndarray) -> Path:
    mesh = v_space.mesh
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    disp = point_displacement(v_space, u)
    inv = stress_invariants(sigma_space, sigma)
    nc = mesh.num_cells
    lines = ["# vtk DataFile Version 3.0", "tdnns solution", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.num_vertices} double")
    lines += [" ".join(f"{x:.12e}" for x in p) for p in mesh.vertices]
    lines.append(f"CELLS {nc} {5 * nc}")
    lines += ["4 " + " ".join(str(int(v)) for v in c) for c in mesh.cells]
    lines.append(f"CELL_TYPES {nc}")
    lines += [str(VTK_TETRA)] * nc
    lines.append(f"POINT_DATA {mesh.num_vertices}")
    lines.append("VECTORS displacement double")
    lines += [" ".join(f"{x:.12e}" for x in d) for d in disp]
    lines.append(f"CELL_DATA {nc}")
    for name, vals in inv.items():
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [f"{x:.12e}" for x in vals]
    path.write_text("\n".join(lines) + "\n")
    return path
