"""Structured meshes of the unit square with full edge connectivity.

Meshes are immutable after construction.  Element vertex lists are
counterclockwise, every element carries the affine map F(xhat) = B*xhat + b
from the reference element (unit triangle or unit square), and the edge
table stores, per edge, the adjacent elements, the local edge index on
each side, the length and the unit normal.  Interior-edge normals point
out of the left (lower-id) element; boundary-edge normals point out of
the domain.
"""

import json

import numpy as np

TRI_LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))
QUAD_LOCAL_EDGES = ((0, 1), (1, 2), (2, 3), (3, 0))

_INSIDE_TOL = 1e-12


class MeshError(ValueError):
    """Invalid mesh geometry or failed point location."""


class Mesh:
    """Conforming partition of (0,1)^2 into triangles or parallelogram quads.

    Attributes
    ----------
    kind : "tri" or "quad"
    vertices : (nv, 2) float array
    conn : (ne, 3|4) int array of counterclockwise vertex ids
    jac : (ne, 2, 2) Jacobians B of the affine maps
    offset : (ne, 2) translation parts (first vertex of each element)
    det : (ne,) Jacobian determinants (positive)
    jac_inv : (ne, 2, 2) inverse Jacobians
    diameters : (ne,) element diameters (largest vertex distance)
    edge_vertices : (nE, 2) vertex pair, oriented along the left element's
        counterclockwise traversal
    edge_left, edge_right : (nE,) element ids (-1 marks no right neighbor)
    edge_left_local, edge_right_local : (nE,) local edge index on each side
    edge_right_reversed : (nE,) bool, right element traverses the edge
        opposite to the stored orientation
    edge_normal : (nE, 2) unit normals, edge_length : (nE,)
    edge_is_boundary : (nE,) bool mask, boundary_edges : index array
    elem_edges : (ne, 3|4) edge id per local edge
    """

    def __init__(self, kind, vertices, conn):
        if kind not in ("tri", "quad"):
            raise MeshError(f"unknown element kind {kind!r}")
        vertices = np.ascontiguousarray(vertices, dtype=float)
        conn = np.ascontiguousarray(conn, dtype=np.int64)
        nvert_per_elem = 3 if kind == "tri" else 4
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must be an (nv, 2) array")
        if conn.ndim != 2 or conn.shape[1] != nvert_per_elem:
            raise MeshError(f"{kind} connectivity must have {nvert_per_elem} columns")
        if not np.all(np.isfinite(vertices)):
            raise MeshError("non-finite vertex coordinates")
        self.kind = kind
        self.vertices = vertices
        self.conn = conn
        self.num_vertices = vertices.shape[0]
        self.num_elements = conn.shape[0]
        self._build_affine_maps()
        self._build_edges()
        self._locator = None
        self.generator = None

    # -- geometry ----------------------------------------------------------

    def _build_affine_maps(self):
        pts = self.vertices[self.conn]  # (ne, k, 2)
        v0 = pts[:, 0, :]
        if self.kind == "tri":
            B = np.stack([pts[:, 1, :] - v0, pts[:, 2, :] - v0], axis=2)
        else:
            # affine quad maps require parallelograms: v0 + v2 = v1 + v3
            gap = np.abs(pts[:, 0] + pts[:, 2] - pts[:, 1] - pts[:, 3]).max()
            if gap > 1e-12:
                raise MeshError("quad element is not a parallelogram; affine map invalid")
            B = np.stack([pts[:, 1, :] - v0, pts[:, 3, :] - v0], axis=2)
        det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
        if np.any(det <= 1e-14):
            bad = int(np.argmax(det <= 1e-14))
            raise MeshError(f"element {bad} is degenerate or not counterclockwise")
        inv = np.empty_like(B)
        inv[:, 0, 0] = B[:, 1, 1] / det
        inv[:, 0, 1] = -B[:, 0, 1] / det
        inv[:, 1, 0] = -B[:, 1, 0] / det
        inv[:, 1, 1] = B[:, 0, 0] / det
        self.jac = B
        self.jac_inv = inv
        self.det = det
        self.offset = v0.copy()
        # diameter = largest pairwise vertex distance
        k = pts.shape[1]
        diam = np.zeros(self.num_elements)
        for i in range(k):
            for j in range(i + 1, k):
                d = np.linalg.norm(pts[:, i, :] - pts[:, j, :], axis=1)
                diam = np.maximum(diam, d)
        self.diameters = diam

    def _build_edges(self):
        local_edges = TRI_LOCAL_EDGES if self.kind == "tri" else QUAD_LOCAL_EDGES
        first = {}
        ev, left, left_loc, right, right_loc, right_rev = [], [], [], [], [], []
        elem_edges = np.full((self.num_elements, len(local_edges)), -1, dtype=np.int64)
        for e in range(self.num_elements):
            for loc, (a, b) in enumerate(local_edges):
                va, vb = int(self.conn[e, a]), int(self.conn[e, b])
                key = (min(va, vb), max(va, vb))
                if key not in first:
                    first[key] = len(ev)
                    ev.append((va, vb))
                    left.append(e)
                    left_loc.append(loc)
                    right.append(-1)
                    right_loc.append(-1)
                    right_rev.append(False)
                    elem_edges[e, loc] = first[key]
                else:
                    idx = first[key]
                    if right[idx] != -1:
                        raise MeshError("edge shared by more than two elements")
                    right[idx] = e
                    right_loc[idx] = loc
                    right_rev[idx] = (va, vb) == ev[idx][::-1]
                    if not right_rev[idx] and (va, vb) != ev[idx]:
                        raise MeshError("inconsistent edge vertex pair")
                    elem_edges[e, loc] = idx
        self.edge_vertices = np.array(ev, dtype=np.int64)
        self.edge_left = np.array(left, dtype=np.int64)
        self.edge_left_local = np.array(left_loc, dtype=np.int64)
        self.edge_right = np.array(right, dtype=np.int64)
        self.edge_right_local = np.array(right_loc, dtype=np.int64)
        self.edge_right_reversed = np.array(right_rev, dtype=bool)
        self.elem_edges = elem_edges
        self.num_edges = len(ev)

        tang = self.vertices[self.edge_vertices[:, 1]] - self.vertices[self.edge_vertices[:, 0]]
        self.edge_length = np.linalg.norm(tang, axis=1)
        if np.any(self.edge_length <= 1e-14):
            raise MeshError("zero-length edge")
        # ccw traversal of the left element => outward normal is the tangent
        # rotated by -90 degrees
        normal = np.stack([tang[:, 1], -tang[:, 0]], axis=1)
        self.edge_normal = normal / self.edge_length[:, None]
        self.edge_is_boundary = self.edge_right == -1
        self.boundary_edges = np.nonzero(self.edge_is_boundary)[0]

    # -- queries -----------------------------------------------------------

    def element_vertices(self, e):
        return self.vertices[self.conn[e]]

    def to_reference(self, e, points):
        """Pull physical points back to reference coordinates of element e."""
        pts = np.atleast_2d(points) - self.offset[e]
        return pts @ self.jac_inv[e].T

    def from_reference(self, e, ref_points):
        ref = np.atleast_2d(ref_points)
        return ref @ self.jac[e].T + self.offset[e]

    def _reference_inside(self, ref, tol):
        x, y = ref[:, 0], ref[:, 1]
        if self.kind == "quad":
            return (x >= -tol) & (x <= 1 + tol) & (y >= -tol) & (y <= 1 + tol)
        return (x >= -tol) & (y >= -tol) & (x + y <= 1 + tol)

    def _build_locator(self):
        n = max(1, int(np.sqrt(self.num_elements)))
        cells = [[] for _ in range(n * n)]
        pts = self.vertices[self.conn]
        # pad bboxes so points exactly on grid lines see every candidate,
        # keeping the lowest-id tie-break exact
        pad = 1e-9
        lo = pts.min(axis=1) - pad
        hi = pts.max(axis=1) + pad
        i0 = np.clip((lo[:, 0] * n).astype(int), 0, n - 1)
        i1 = np.clip(np.ceil(hi[:, 0] * n).astype(int) - 1, 0, n - 1)
        j0 = np.clip((lo[:, 1] * n).astype(int), 0, n - 1)
        j1 = np.clip(np.ceil(hi[:, 1] * n).astype(int) - 1, 0, n - 1)
        for e in range(self.num_elements):
            for i in range(i0[e], i1[e] + 1):
                for j in range(j0[e], j1[e] + 1):
                    cells[i * n + j].append(e)
        self._locator = (n, cells)

    def locate(self, points, tol=_INSIDE_TOL):
        """Containing element id for each point; lowest id wins on edges.

        Points must lie in the closed unit square (within tol); otherwise
        a MeshError is raised.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.ndim != 2 or points.shape[1] != 2:
            raise MeshError("points must be an (m, 2) array")
        out = (points < -tol) | (points > 1 + tol)
        if np.any(out):
            bad = points[np.any(out, axis=1)][0]
            raise MeshError(f"point {tuple(bad)} outside the unit square")
        if self._locator is None:
            self._build_locator()
        n, cells = self._locator
        ix = np.clip((points[:, 0] * n).astype(int), 0, n - 1)
        iy = np.clip((points[:, 1] * n).astype(int), 0, n - 1)
        cell_ids = ix * n + iy
        result = np.full(points.shape[0], -1, dtype=np.int64)
        order = np.argsort(cell_ids, kind="stable")
        sorted_cells = cell_ids[order]
        starts = np.searchsorted(sorted_cells, np.arange(n * n), side="left")
        ends = np.searchsorted(sorted_cells, np.arange(n * n), side="right")
        for cid in np.unique(sorted_cells):
            idx = order[starts[cid]:ends[cid]]
            pending = idx
            for e in sorted(cells[cid]):
                if pending.size == 0:
                    break
                ref = self.to_reference(e, points[pending])
                hit = self._reference_inside(ref, tol)
                result[pending[hit]] = e
                pending = pending[~hit]
        if np.any(result < 0):
            # retry stragglers (points hugging cell borders) with a wider net
            for k in np.nonzero(result < 0)[0]:
                for e in range(self.num_elements):
                    ref = self.to_reference(e, points[k:k + 1])
                    if self._reference_inside(ref, 1e-9)[0]:
                        result[k] = e
                        break
                else:
                    raise MeshError(f"point {tuple(points[k])} not located in any element")
        return result

    # -- export ------------------------------------------------------------

    def dump_json(self, path=None):
        """Debug dump (vertices, connectivity, edge table) as JSON."""
        doc = {
            "kind": self.kind,
            "vertices": self.vertices.tolist(),
            "elements": self.conn.tolist(),
            "edges": [
                {
                    "vertices": self.edge_vertices[i].tolist(),
                    "left": int(self.edge_left[i]),
                    "right": None if self.edge_right[i] < 0 else int(self.edge_right[i]),
                    "boundary": bool(self.edge_is_boundary[i]),
                    "normal": self.edge_normal[i].tolist(),
                    "length": float(self.edge_length[i]),
                }
                for i in range(self.num_edges)
            ],
        }
        text = json.dumps(doc, indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def build_uniform_quad_mesh(n):
    """n x n mesh of axis-aligned squares of side 1/n."""
    if n < 1:
        raise MeshError("n must be >= 1")
    s = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(s, s, indexing="ij")
    vertices = np.stack([xx.ravel(), yy.ravel()], axis=1)

    def vid(i, j):
        return i * (n + 1) + j

    conn = []
    for j in range(n):          # rows (x2 direction)
        for i in range(n):      # columns (x1 direction)
            conn.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
    mesh = Mesh("quad", vertices, np.array(conn))
    mesh.generator = {"kind": "quad", "n": n, "split": None}
    return mesh


def build_uniform_tri_mesh(n, split="crisscross"):
    """Triangulation of the n x n grid.

    split="diagonal" cuts every cell along one diagonal (2 n^2 triangles);
    split="crisscross" cuts along both diagonals through an added center
    vertex (4 n^2 triangles).
    """
    if n < 1:
        raise MeshError("n must be >= 1")
    if split not in ("diagonal", "crisscross"):
        raise MeshError(f"unknown split {split!r}")
    s = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(s, s, indexing="ij")
    grid = np.stack([xx.ravel(), yy.ravel()], axis=1)

    def vid(i, j):
        return i * (n + 1) + j

    conn = []
    if split == "diagonal":
        vertices = grid
        for j in range(n):
            for i in range(n):
                v00, v10 = vid(i, j), vid(i + 1, j)
                v11, v01 = vid(i + 1, j + 1), vid(i, j + 1)
                conn.append([v00, v10, v11])
                conn.append([v00, v11, v01])
    else:
        h = 1.0 / n
        centers = []
        for j in range(n):
            for i in range(n):
                centers.append([(i + 0.5) * h, (j + 0.5) * h])
        vertices = np.vstack([grid, np.array(centers)])
        nc = grid.shape[0]
        for j in range(n):
            for i in range(n):
                c = nc + j * n + i
                v00, v10 = vid(i, j), vid(i + 1, j)
                v11, v01 = vid(i + 1, j + 1), vid(i, j + 1)
                conn.append([v00, v10, c])
                conn.append([v10, v11, c])
                conn.append([v11, v01, c])
                conn.append([v01, v00, c])
    mesh = Mesh("tri", vertices, np.array(conn))
    mesh.generator = {"kind": "tri", "n": n, "split": split}
    return mesh


def shape_regularity(mesh):
    """max over elements of h^-1 |B| + h |B^-1| with spectral norms."""
    worst = 0.0
    for e in range(mesh.num_elements):
        B = mesh.jac[e]
        nrm = np.linalg.norm(B, 2)
        nrm_inv = np.linalg.norm(mesh.jac_inv[e], 2)
        h = mesh.diameters[e]
        worst = max(worst, nrm / h + nrm_inv * h)
    return worst


def edge_degrees(mesh, degrees):
    """Per-edge degree p_e: max of the adjacent element degrees.

    Boundary edges inherit the left (only) element's degree.
    """
    degrees = np.asarray(degrees, dtype=np.int64)
    p_left = degrees[mesh.edge_left]
    p_right = np.where(mesh.edge_right >= 0, degrees[np.maximum(mesh.edge_right, 0)], p_left)
    return np.maximum(p_left, p_right)


def check_degree_vector(mesh, degrees, gamma=2.0):
    """Validate the slow-variation bound between touching elements.

    Elements sharing at least one vertex must have degree ratio within
    [1/gamma, gamma].  Raises MeshError on violation.
    """
    degrees = np.asarray(degrees, dtype=np.int64)
    if degrees.shape != (mesh.num_elements,):
        raise MeshError("degree vector length does not match element count")
    if np.any(degrees < 1):
        raise MeshError("polynomial degrees must be >= 1")
    by_vertex = {}
    for e in range(mesh.num_elements):
        for v in mesh.conn[e]:
            by_vertex.setdefault(int(v), []).append(e)
    for elems in by_vertex.values():
        for i in range(len(elems)):
            for j in range(i + 1, len(elems)):
                pa, pb = degrees[elems[i]], degrees[elems[j]]
                if pa > gamma * pb or pb > gamma * pa:
                    raise MeshError(
                        f"degrees {pa} and {pb} of touching elements "
                        f"{elems[i]}, {elems[j]} violate the gamma={gamma} bound"
                    )
    return degrees
