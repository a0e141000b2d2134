"""Reference-element shape functions, quadrature rules, and edge traces.

Bases are nodal Lagrange on the equispaced lattice: the principal lattice
for total-degree polynomials on the unit triangle T = {(0,0),(1,0),(0,1)}
and the tensor lattice for tensor-degree polynomials on the unit square
S = (0,1)^2.  With either lattice the restriction of a shape function to
an edge is determined by the nodes on that edge, which is what makes
cross-element continuity a matter of sharing nodal values.

Basis coefficients are computed once per (kind, degree) by inverting the
monomial Vandermonde matrix in exact rational arithmetic, so partition of
unity and nodal interpolation hold to the last floating-point digit.
"""

from fractions import Fraction

import numpy as np

TRI_REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
QUAD_REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])

# local edges as (start vertex, end vertex) into the arrays above
TRI_EDGE_VERTS = ((0, 1), (1, 2), (2, 0))
QUAD_EDGE_VERTS = ((0, 1), (1, 2), (2, 3), (3, 0))


class ElementError(ValueError):
    """Invalid basis or quadrature request."""


def _rational_inverse(matrix):
    """Exact inverse of a square Fraction matrix via Gauss-Jordan."""
    n = len(matrix)
    aug = [row[:] + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(matrix)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            raise ElementError("singular Vandermonde matrix; nodes not unisolvent")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv_p = Fraction(1, 1) / aug[col][col]
        aug[col] = [v * inv_p for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


class ShapeBasis:
    """Nodal Lagrange basis of P_k (triangle) or Q_k (square).

    nodes : (count, 2) lattice points in the reference element
    vertex_nodes : local node index of each reference vertex
    edge_nodes : per local edge, the interior node indices ordered along
        the edge direction
    interior_nodes : node indices off every edge
    """

    _cache = {}

    def __new__(cls, kind, degree):
        key = (kind, degree)
        hit = cls._cache.get(key)
        if hit is not None:
            return hit
        self = super().__new__(cls)
        self._init(kind, degree)
        cls._cache[key] = self
        return self

    def _init(self, kind, degree):
        if kind not in ("tri", "quad"):
            raise ElementError(f"unknown reference element {kind!r}")
        if degree < 1:
            raise ElementError("degree must be >= 1")
        self.kind = kind
        self.degree = degree
        k = degree
        if kind == "tri":
            self.exponents = [(a, b) for s in range(k + 1) for a in range(s, -1, -1)
                              for b in (s - a,)]
            lattice = [(i, j) for j in range(k + 1) for i in range(k + 1 - j)]
            vander = [[Fraction(i, k) ** a * Fraction(j, k) ** b
                       for (a, b) in self.exponents] for (i, j) in lattice]
            coef = _rational_inverse(vander)
            # coef[m][f]: weight of monomial m in shape function f
            self.coef = np.array([[float(c) for c in row] for row in coef])
        else:
            lattice = [(i, j) for j in range(k + 1) for i in range(k + 1)]
            # tensor structure: shape function (i,j) is L_i(x) L_j(y);
            # exact 1D Lagrange coefficients keep partition of unity tight
            vander1d = [[Fraction(i, k) ** m for m in range(k + 1)] for i in range(k + 1)]
            coef1d = _rational_inverse(vander1d)
            self.coef1d = np.array([[float(c) for c in row] for row in coef1d])
        self.count = len(lattice)
        self._lattice = lattice
        self.nodes = np.array(lattice, dtype=float) / k
        self._classify_nodes()

    def _classify_nodes(self):
        k = self.degree
        index_of = {latt: idx for idx, latt in enumerate(self._lattice)}
        if self.kind == "tri":
            self.vertex_nodes = [index_of[(0, 0)], index_of[(k, 0)], index_of[(0, k)]]
            edges = [
                [index_of[(i, 0)] for i in range(1, k)],
                [index_of[(k - j, j)] for j in range(1, k)],
                [index_of[(0, k - j)] for j in range(1, k)],
            ]
            interior = [index_of[(i, j)] for (i, j) in self._lattice
                        if i > 0 and j > 0 and i + j < k]
        else:
            self.vertex_nodes = [index_of[(0, 0)], index_of[(k, 0)],
                                 index_of[(k, k)], index_of[(0, k)]]
            edges = [
                [index_of[(i, 0)] for i in range(1, k)],
                [index_of[(k, j)] for j in range(1, k)],
                [index_of[(k - i, k)] for i in range(1, k)],
                [index_of[(0, k - j)] for j in range(1, k)],
            ]
            interior = [index_of[(i, j)] for (i, j) in self._lattice
                        if 0 < i < k and 0 < j < k]
        self.edge_nodes = edges
        self.interior_nodes = interior

    # -- evaluation ---------------------------------------------------------

    def _monomials(self, points, dx=0, dy=0):
        pts = np.atleast_2d(points)
        x, y = pts[:, 0], pts[:, 1]
        cols = []
        for (a, b) in self.exponents:
            if a < dx or b < dy:
                cols.append(np.zeros(len(pts)))
                continue
            ca = 1.0
            for t in range(dx):
                ca *= a - t
            for t in range(dy):
                ca *= b - t
            cols.append(ca * x ** (a - dx) * y ** (b - dy))
        return np.stack(cols, axis=1)

    def _lagrange_1d(self, t, deriv=0):
        """Values (m, k+1) of the 1D Lagrange basis or a derivative."""
        k = self.degree
        t = np.asarray(t, dtype=float)
        powers = np.zeros((len(t), k + 1))
        for m in range(deriv, k + 1):
            c = 1.0
            for s in range(deriv):
                c *= m - s
            powers[:, m] = c * t ** (m - deriv)
        return powers @ self.coef1d

    def eval(self, points):
        """Values (m, count) of all shape functions at reference points."""
        pts = np.atleast_2d(points)
        if self.kind == "tri":
            return self._monomials(pts) @ self.coef
        vx = self._lagrange_1d(pts[:, 0])
        vy = self._lagrange_1d(pts[:, 1])
        return np.einsum("pj,pi->pji", vy, vx).reshape(len(pts), self.count)

    def eval_gradients(self, points):
        """Reference gradients (m, count, 2)."""
        pts = np.atleast_2d(points)
        if self.kind == "tri":
            gx = self._monomials(pts, dx=1) @ self.coef
            gy = self._monomials(pts, dy=1) @ self.coef
            return np.stack([gx, gy], axis=2)
        vx = self._lagrange_1d(pts[:, 0])
        vy = self._lagrange_1d(pts[:, 1])
        dx = self._lagrange_1d(pts[:, 0], deriv=1)
        dy = self._lagrange_1d(pts[:, 1], deriv=1)
        m = len(pts)
        gx = np.einsum("pj,pi->pji", vy, dx).reshape(m, self.count)
        gy = np.einsum("pj,pi->pji", dy, vx).reshape(m, self.count)
        return np.stack([gx, gy], axis=2)

    def eval_hessians(self, points):
        """Reference second derivatives (m, count, 2, 2)."""
        pts = np.atleast_2d(points)
        if self.kind == "tri":
            hxx = self._monomials(pts, dx=2) @ self.coef
            hxy = self._monomials(pts, dx=1, dy=1) @ self.coef
            hyy = self._monomials(pts, dy=2) @ self.coef
        else:
            vx = self._lagrange_1d(pts[:, 0])
            vy = self._lagrange_1d(pts[:, 1])
            dx = self._lagrange_1d(pts[:, 0], deriv=1)
            dy = self._lagrange_1d(pts[:, 1], deriv=1)
            ddx = self._lagrange_1d(pts[:, 0], deriv=2)
            ddy = self._lagrange_1d(pts[:, 1], deriv=2)
            m = len(pts)
            hxx = np.einsum("pj,pi->pji", vy, ddx).reshape(m, self.count)
            hxy = np.einsum("pj,pi->pji", dy, dx).reshape(m, self.count)
            hyy = np.einsum("pj,pi->pji", ddy, vx).reshape(m, self.count)
        hess = np.empty(hxx.shape + (2, 2))
        hess[:, :, 0, 0] = hxx
        hess[:, :, 0, 1] = hxy
        hess[:, :, 1, 0] = hxy
        hess[:, :, 1, 1] = hyy
        return hess


def basis_eval(basis, points):
    """(values, gradients, hessians) of all shape functions at points."""
    return basis.eval(points), basis.eval_gradients(points), basis.eval_hessians(points)


class QuadratureRule:
    """Positive-weight rule on a reference element.

    points : (m, 2), weights : (m,), exactness_degree : int
    """

    def __init__(self, kind, points, weights, exactness_degree):
        self.kind = kind
        self.points = points
        self.weights = weights
        self.exactness_degree = exactness_degree

    def __len__(self):
        return len(self.weights)


def gauss1d(exactness):
    """Gauss-Legendre nodes/weights on [0, 1] exact up to the given degree."""
    n = max(1, exactness // 2 + 1)
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


_quad_cache = {}


def make_quadrature(kind, exactness):
    """Tensor Gauss rule on the square; collapsed tensor rule on the triangle.

    The triangle rule integrates the reference triangle through the
    substitution (x, t) -> (x, t*(1-x)) whose Jacobian 1-x raises the
    x-degree by one, hence the asymmetric tensor orders.
    """
    if exactness < 0:
        raise ElementError("exactness must be >= 0")
    key = (kind, exactness)
    hit = _quad_cache.get(key)
    if hit is not None:
        return hit
    if kind == "quad":
        x, wx = gauss1d(exactness)
        pts = np.array([(a, b) for b in x for a in x])
        wts = np.array([wa * wb for wb in wx for wa in wx])
    elif kind == "tri":
        x, wx = gauss1d(exactness + 1)
        t, wt = gauss1d(exactness)
        pts, wts = [], []
        for b, vb in zip(t, wt):
            for a, va in zip(x, wx):
                pts.append((a, b * (1.0 - a)))
                wts.append(va * vb * (1.0 - a))
        pts = np.array(pts)
        wts = np.array(wts)
    else:
        raise ElementError(f"unknown reference element {kind!r}")
    rule = QuadratureRule(kind, pts, wts, exactness)
    _quad_cache[key] = rule
    return rule


def edge_endpoints(kind, edge_index):
    verts = TRI_REF_VERTICES if kind == "tri" else QUAD_REF_VERTICES
    pairs = TRI_EDGE_VERTS if kind == "tri" else QUAD_EDGE_VERTS
    if not 0 <= edge_index < len(pairs):
        raise ElementError(f"edge index {edge_index} invalid for {kind}")
    a, b = pairs[edge_index]
    return verts[a], verts[b]


def edge_ref_points(kind, edge_index, tpoints):
    """Reference coordinates of edge parameters t in [0, 1]."""
    a, b = edge_endpoints(kind, edge_index)
    t = np.asarray(tpoints, dtype=float)[:, None]
    return a + t * (b - a)


def edge_trace(basis, edge_index, tpoints):
    """Shape values and full reference gradients along a local edge."""
    ref = edge_ref_points(basis.kind, edge_index, tpoints)
    return basis.eval(ref), basis.eval_gradients(ref)
