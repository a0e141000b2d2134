"""Matplotlib rendering of fields, indicator maps, and convergence plots.

The report path writes these PNGs next to the delimited output.  Uses the
Agg backend; nothing here opens a window.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import matplotlib.tri as mtri
import numpy as np

from .estimator import all_local_indicators
from .export import sample_triple


def _triangulate(points, cells, cell_type):
    tris = []
    for cell in cells:
        if cell_type == 5:
            tris.append(cell)
        else:
            tris.append([cell[0], cell[1], cell[2]])
            tris.append([cell[0], cell[2], cell[3]])
    return mtri.Triangulation(points[:, 0], points[:, 1], np.array(tris))


def render_fields(triple, out_dir, stem="fields"):
    """One PNG per field (u, y, z); returns the written paths."""
    points, cells, cell_type, u, y, z = sample_triple(triple)
    tri = _triangulate(points, cells, cell_type)
    paths = []
    for name, vals in (("u", u), ("y", y), ("z", z)):
        fig, ax = plt.subplots(figsize=(4.6, 3.8))
        im = ax.tripcolor(tri, vals, shading="gouraud", cmap="viridis")
        ax.set_xlabel("$x_1$")
        ax.set_ylabel("$x_2$")
        ax.set_title(name)
        ax.set_aspect("equal")
        fig.colorbar(im, ax=ax)
        path = f"{out_dir}/{stem}_{name}.png"
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        paths.append(path)
    return paths


def render_indicator_map(breakdown, out_path):
    """Per-element map of the local error indicator."""
    mesh = breakdown.mesh
    local = all_local_indicators(breakdown)
    fig, ax = plt.subplots(figsize=(4.6, 3.8))
    if mesh.kind == "tri":
        tri = mtri.Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.conn)
        im = ax.tripcolor(tri, facecolors=local, cmap="magma")
    else:
        tris, vals = [], []
        for e in range(mesh.num_elements):
            c = mesh.conn[e]
            tris.append([c[0], c[1], c[2]])
            tris.append([c[0], c[2], c[3]])
            vals.extend([local[e], local[e]])
        tri = mtri.Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], np.array(tris))
        im = ax.tripcolor(tri, facecolors=np.array(vals), cmap="magma")
    ax.set_aspect("equal")
    ax.set_title("local squared indicator")
    fig.colorbar(im, ax=ax)
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out_path


def render_convergence(table, out_path):
    """log-log error curves vs h, one line per norm and degree."""
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    degrees = sorted({row.p for row in table.rows})
    styles = {"u_L2": "o-", "y_H1": "s--", "z_H1": "d:"}
    for p in degrees:
        rows = [r for r in table.rows if r.p == p]
        hs = [r.h for r in rows]
        for col, style in styles.items():
            errs = [getattr(r.errors, col) for r in rows]
            ax.loglog(hs, errs, style, label=f"{col}, p={p}")
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out_path
