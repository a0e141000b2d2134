"""Field export: legacy VTK unstructured grids and nodal-value CSV.

Every element is sampled on its own nodal lattice (points duplicated
across elements so the discontinuous control plots faithfully); lattice
cells become VTK_QUAD / VTK_TRIANGLE cells.
"""

import csv

import numpy as np


def _quad_lattice_cells(p):
    def nid(i, j):
        return j * (p + 1) + i

    cells = []
    for j in range(p):
        for i in range(p):
            cells.append([nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)])
    return cells


def _tri_lattice_cells(p):
    offsets = np.cumsum([0] + [p + 1 - j for j in range(p + 1)])

    def nid(i, j):
        return int(offsets[j] + i)

    cells = []
    for j in range(p):
        for i in range(p - j):
            cells.append([nid(i, j), nid(i + 1, j), nid(i, j + 1)])
            if i + j < p - 1:
                cells.append([nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)])
    return cells


def sample_triple(triple):
    """Per-element lattice samples of (u, y, z).

    Returns (points, cells, cell_type, u, y, z) with points stacked over
    elements and cells indexing into that stack.
    """
    us = triple.u.space
    ys = triple.y.space
    mesh = us.mesh
    points, cells, u_vals, y_vals, z_vals = [], [], [], [], []
    base = 0
    for e in range(mesh.num_elements):
        bas = us.bases[e]
        p = bas.degree
        phys = mesh.from_reference(e, bas.nodes)
        local_cells = _tri_lattice_cells(p) if mesh.kind == "tri" else _quad_lattice_cells(p)
        state_bas = ys.bases[e]
        N = state_bas.eval(bas.nodes)
        yloc = ys.element_local(triple.y, e)
        zloc = ys.element_local(triple.z, e)
        points.append(phys)
        u_vals.append(us.element_local(triple.u, e))
        y_vals.append(N @ yloc)
        z_vals.append(N @ zloc)
        cells.extend([[c + base for c in cell] for cell in local_cells])
        base += bas.count
    cell_type = 5 if mesh.kind == "tri" else 9
    return (np.vstack(points), cells, cell_type,
            np.concatenate(u_vals), np.concatenate(y_vals), np.concatenate(z_vals))


def write_vtk(triple, path, title="control state adjoint fields"):
    """Legacy VTK ASCII (version 3.0) unstructured grid with u, y, z scalars."""
    points, cells, cell_type, u, y, z = sample_triple(triple)
    npts = len(points)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title + "\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {npts} double\n")
        for x1, x2 in points:
            fh.write(f"{x1:.17g} {x2:.17g} 0.0\n")
        nc = len(cells)
        size = sum(len(c) + 1 for c in cells)
        fh.write(f"CELLS {nc} {size}\n")
        for cell in cells:
            fh.write(" ".join([str(len(cell))] + [str(i) for i in cell]) + "\n")
        fh.write(f"CELL_TYPES {nc}\n")
        for _ in cells:
            fh.write(f"{cell_type}\n")
        fh.write(f"POINT_DATA {npts}\n")
        for name, vals in (("u", u), ("y", y), ("z", z)):
            fh.write(f"SCALARS {name} double 1\n")
            fh.write("LOOKUP_TABLE default\n")
            for v in vals:
                fh.write(f"{v:.17g}\n")


def write_fields_csv(triple, path):
    """Nodal values per element; full-precision floats, bitwise re-readable."""
    us = triple.u.space
    ys = triple.y.space
    mesh = us.mesh
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["element", "node", "x1", "x2", "u", "y", "z"])
        for e in range(mesh.num_elements):
            bas = us.bases[e]
            phys = mesh.from_reference(e, bas.nodes)
            N = ys.bases[e].eval(bas.nodes)
            uloc = us.element_local(triple.u, e)
            yloc = N @ ys.element_local(triple.y, e)
            zloc = N @ ys.element_local(triple.z, e)
            for k in range(bas.count):
                writer.writerow([e, k, f"{phys[k, 0]:.17g}", f"{phys[k, 1]:.17g}",
                                 f"{uloc[k]:.17g}", f"{yloc[k]:.17g}", f"{zloc[k]:.17g}"])


def read_fields_csv(path):
    """Read back a nodal-value CSV as arrays keyed by column name."""
    rows = {"element": [], "node": [], "x1": [], "x2": [], "u": [], "y": [], "z": []}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows["element"].append(int(rec["element"]))
            rows["node"].append(int(rec["node"]))
            for key in ("x1", "x2", "u", "y", "z"):
                rows[key].append(float(rec[key]))
    return {k: np.array(v) for k, v in rows.items()}
