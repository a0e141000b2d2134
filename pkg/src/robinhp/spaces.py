"""Global finite element spaces over one mesh.

StateSpace is the H1-conforming Lagrange space with a per-element degree
vector: vertices carry one dof, each edge carries q-1 dofs where q is the
minimum of the adjacent element degrees, and element interiors carry the
rest.  When an element's degree exceeds an edge's q, its edge nodes are
not independent dofs; a per-element constraint matrix expresses them as
the degree-q interpolant of the shared edge values, which keeps traces
from both sides identical.  Uniform degree (the common case) needs no
constraint matrices and uses plain gather/scatter index maps.

ControlSpace is the same polynomial family without any inter-element
coupling; its dofs are element-local nodal values.
"""

import numpy as np

from .elements import ShapeBasis, make_quadrature, edge_endpoints, gauss1d
from .meshkit import check_degree_vector


class SpaceError(ValueError):
    """Inconsistent space construction or field usage."""


def _lagrange_1d_weights(q, s):
    """Values of the degree-q equispaced 1D Lagrange basis at parameter s."""
    nodes = np.arange(q + 1) / q
    vals = np.ones(q + 1)
    for i in range(q + 1):
        for j in range(q + 1):
            if j != i:
                vals[i] *= (s - nodes[j]) / (nodes[i] - nodes[j])
    return vals


def _as_degree_array(mesh, degrees):
    if np.isscalar(degrees):
        return np.full(mesh.num_elements, int(degrees), dtype=np.int64)
    return np.asarray(degrees, dtype=np.int64)


class StateSpace:
    """Conforming space of continuous piecewise polynomials."""

    def __init__(self, mesh, degrees, gamma=2.0):
        degrees = _as_degree_array(mesh, degrees)
        check_degree_vector(mesh, degrees, gamma=gamma)
        self.mesh = mesh
        self.degrees = degrees
        self.bases = [ShapeBasis(mesh.kind, int(p)) for p in degrees]

        p_left = degrees[mesh.edge_left]
        p_right = np.where(mesh.edge_right >= 0,
                           degrees[np.maximum(mesh.edge_right, 0)], p_left)
        self.edge_conf_degree = np.minimum(p_left, p_right)

        nv = mesh.num_vertices
        self.edge_dof_offset = nv + np.concatenate(
            [[0], np.cumsum(self.edge_conf_degree - 1)[:-1]])
        n_edge_dofs = int(np.sum(self.edge_conf_degree - 1))
        interior_counts = np.array([len(b.interior_nodes) for b in self.bases])
        self.interior_dof_offset = nv + n_edge_dofs + np.concatenate(
            [[0], np.cumsum(interior_counts)[:-1]])
        self.dim = int(nv + n_edge_dofs + interior_counts.sum())

        self._build_element_maps()
        self._ctx = None
        self._bctx = None

    def _edge_direction_matches(self, elem, edge_id):
        if self.mesh.edge_left[edge_id] == elem:
            return True
        return not self.mesh.edge_right_reversed[edge_id]

    def _build_element_maps(self):
        mesh = self.mesh
        uniform = len(set(self.degrees.tolist())) == 1
        maps = []
        needs_constraints = False
        for e in range(mesh.num_elements):
            bas = self.bases[e]
            p = bas.degree
            gids = np.empty(bas.count, dtype=np.int64)
            constrained_edges = []
            for local_v, node in enumerate(bas.vertex_nodes):
                gids[node] = mesh.conn[e, local_v]
            for loc_edge, nodes in enumerate(bas.edge_nodes):
                edge_id = mesh.elem_edges[e, loc_edge]
                q = int(self.edge_conf_degree[edge_id])
                base = self.edge_dof_offset[edge_id]
                same_dir = self._edge_direction_matches(e, edge_id)
                if q == p:
                    for m, node in enumerate(nodes):
                        g = m if same_dir else p - 2 - m
                        gids[node] = base + g
                else:
                    needs_constraints = True
                    constrained_edges.append((loc_edge, edge_id, q, same_dir))
                    for node in nodes:
                        gids[node] = -1
            for m, node in enumerate(bas.interior_nodes):
                gids[node] = self.interior_dof_offset[e] + m
            maps.append((gids, constrained_edges))

        if uniform and not needs_constraints:
            self.uniform_degree = int(self.degrees[0])
            self.element_dofs = np.stack([g for g, _ in maps])
            self.element_maps = None
            return
        self.uniform_degree = None
        self.element_dofs = None
        self.element_maps = [self._finish_map(e, g, ce) for e, (g, ce) in enumerate(maps)]

    def _finish_map(self, e, gids, constrained_edges):
        """Return (gcols, C) with local values = C @ coeffs[gcols]."""
        bas = self.bases[e]
        if not constrained_edges:
            return gids, None
        mesh = self.mesh
        gcols = sorted(set(int(g) for g in gids if g >= 0))
        extra = []
        for _, edge_id, q, _ in constrained_edges:
            va, vb = mesh.edge_vertices[edge_id]
            extra.extend([int(va), int(vb)])
            base = self.edge_dof_offset[edge_id]
            extra.extend(range(int(base), int(base) + q - 1))
        gcols = sorted(set(gcols) | set(extra))
        col_of = {g: i for i, g in enumerate(gcols)}
        C = np.zeros((bas.count, len(gcols)))
        for node, g in enumerate(gids):
            if g >= 0:
                C[node, col_of[int(g)]] = 1.0
        p = bas.degree
        for loc_edge, edge_id, q, same_dir in constrained_edges:
            va, vb = (int(v) for v in mesh.edge_vertices[edge_id])
            base = int(self.edge_dof_offset[edge_id])
            chain = [va] + [base + m for m in range(q - 1)] + [vb]
            for m, node in enumerate(bas.edge_nodes[loc_edge]):
                s_local = (m + 1) / p
                s = s_local if same_dir else 1.0 - s_local
                w = _lagrange_1d_weights(q, s)
                for gid, wv in zip(chain, w):
                    C[node, col_of[gid]] += wv
        return np.array(gcols, dtype=np.int64), C

    def local_coefficients(self, field):
        """Per-element local nodal coefficients.

        Returns an (ne, nloc) array for uniform-degree spaces, else a list.
        """
        if field.space is not self:
            raise SpaceError("field does not belong to this space")
        if self.element_dofs is not None:
            return field.coeffs[self.element_dofs]
        out = []
        for gids, C in self.element_maps:
            vals = field.coeffs[gids]
            out.append(vals if C is None else C @ vals)
        return out

    def element_local(self, field, e):
        if self.element_dofs is not None:
            return field.coeffs[self.element_dofs[e]]
        gids, C = self.element_maps[e]
        vals = field.coeffs[gids]
        return vals if C is None else C @ vals

    def scatter_add(self, target, e, local_vector):
        """Accumulate an element-local vector into a global one."""
        if self.element_dofs is not None:
            np.add.at(target, self.element_dofs[e], local_vector)
            return
        gids, C = self.element_maps[e]
        np.add.at(target, gids, local_vector if C is None else C.T @ local_vector)

    def zero_field(self):
        return Field(self, np.zeros(self.dim))

    def quad_context(self):
        if self._ctx is None:
            self._ctx = _VolumeContext(self)
        return self._ctx

    def boundary_context(self):
        if self._bctx is None:
            self._bctx = _BoundaryContext(self)
        return self._bctx


class ControlSpace:
    """Discontinuous piecewise polynomials; element-local nodal dofs."""

    def __init__(self, mesh, degrees):
        degrees = _as_degree_array(mesh, degrees)
        if np.any(degrees < 1):
            raise SpaceError("polynomial degrees must be >= 1")
        self.mesh = mesh
        self.degrees = degrees
        self.bases = [ShapeBasis(mesh.kind, int(p)) for p in degrees]
        counts = np.array([b.count for b in self.bases])
        self.offsets = np.concatenate([[0], np.cumsum(counts)])
        self.dim = int(counts.sum())
        self.uniform_degree = int(degrees[0]) if len(set(degrees.tolist())) == 1 else None
        self._ctx = None

    def element_slice(self, e):
        return slice(int(self.offsets[e]), int(self.offsets[e + 1]))

    def element_local(self, field, e):
        if field.space is not self:
            raise SpaceError("field does not belong to this space")
        return field.coeffs[self.element_slice(e)]

    def local_coefficients(self, field):
        if field.space is not self:
            raise SpaceError("field does not belong to this space")
        if self.uniform_degree is not None:
            return field.coeffs.reshape(self.mesh.num_elements, -1)
        return [field.coeffs[self.element_slice(e)] for e in range(self.mesh.num_elements)]

    def node_coordinates(self, e):
        """Physical positions of element e's nodal points."""
        return self.mesh.from_reference(e, self.bases[e].nodes)

    def zero_field(self):
        return Field(self, np.zeros(self.dim))

    def quad_context(self):
        if self._ctx is None:
            self._ctx = _VolumeContext(self)
        return self._ctx


class Field:
    """Coefficient vector of a finite element function."""

    def __init__(self, space, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.dim,):
            raise SpaceError(f"got {coeffs.shape[0] if coeffs.ndim else 0} coefficients, "
                             f"space has dim {space.dim}")
        if not np.all(np.isfinite(coeffs)):
            raise SpaceError("non-finite coefficients")
        self.space = space
        self.coeffs = coeffs

    def copy(self):
        return Field(self.space, self.coeffs.copy())

    def _check_same(self, other):
        if other.space is not self.space:
            raise SpaceError("fields live on different spaces")

    def __add__(self, other):
        self._check_same(other)
        return Field(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_same(other)
        return Field(self.space, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return Field(self.space, self.coeffs * float(scalar))

    __rmul__ = __mul__


# -- quadrature contexts (cached on the space) ------------------------------

class _VolumeContext:
    """Per-degree element groups with basis tables at quadrature points."""

    def __init__(self, space, extra_exactness=3):
        mesh = space.mesh
        self.space = space
        self.groups = []
        for p in sorted(set(space.degrees.tolist())):
            ids = np.nonzero(space.degrees == p)[0]
            basis = ShapeBasis(mesh.kind, int(p))
            rule = make_quadrature(mesh.kind, 2 * int(p) + extra_exactness)
            N = basis.eval(rule.points)
            G = basis.eval_gradients(rule.points)
            phys = (rule.points @ mesh.jac[ids].transpose(0, 2, 1)
                    + mesh.offset[ids][:, None, :])
            wdet = rule.weights[None, :] * mesh.det[ids][:, None]
            self.groups.append(_Group(ids, basis, rule, N, G, phys, wdet))


class _Group:
    def __init__(self, ids, basis, rule, N, G, phys, wdet):
        self.ids = ids
        self.basis = basis
        self.rule = rule
        self.N = N            # (nq, nloc)
        self.G = G            # (nq, nloc, 2)
        self.phys = phys      # (ng, nq, 2)
        self.wdet = wdet      # (ng, nq)
        self._H = None

    def hessians(self):
        if self._H is None:
            self._H = self.basis.eval_hessians(self.rule.points)
        return self._H


class _BoundaryContext:
    """Trace tables on boundary edges of the left (only) element."""

    def __init__(self, space, extra_exactness=3):
        mesh = space.mesh
        self.space = space
        self.edges = []
        trace_cache = {}
        for edge_id in mesh.boundary_edges:
            e = int(mesh.edge_left[edge_id])
            loc = int(mesh.edge_left_local[edge_id])
            p = int(space.degrees[e])
            key = (p, loc)
            if key not in trace_cache:
                basis = ShapeBasis(mesh.kind, p)
                t, w = gauss1d(2 * p + extra_exactness)
                a, b = edge_endpoints(mesh.kind, loc)
                ref = a + t[:, None] * (b - a)
                trace_cache[key] = (t, w, basis.eval(ref), basis.eval_gradients(ref))
            t, w, N, G = trace_cache[key]
            va = mesh.vertices[mesh.conn[e][_edge_start_vertex(mesh.kind, loc)]]
            vb = mesh.vertices[mesh.conn[e][_edge_end_vertex(mesh.kind, loc)]]
            phys = va + t[:, None] * (vb - va)
            h = mesh.edge_length[edge_id]
            self.edges.append(_BoundaryEdge(int(edge_id), e, loc, w * h, phys, N, G))


def _edge_start_vertex(kind, loc):
    from .elements import TRI_EDGE_VERTS, QUAD_EDGE_VERTS
    return (TRI_EDGE_VERTS if kind == "tri" else QUAD_EDGE_VERTS)[loc][0]


def _edge_end_vertex(kind, loc):
    from .elements import TRI_EDGE_VERTS, QUAD_EDGE_VERTS
    return (TRI_EDGE_VERTS if kind == "tri" else QUAD_EDGE_VERTS)[loc][1]


class _BoundaryEdge:
    def __init__(self, edge_id, elem, local_edge, weights, phys, N, G):
        self.edge_id = edge_id
        self.elem = elem
        self.local_edge = local_edge
        self.weights = weights  # 1D weights already scaled by edge length
        self.phys = phys        # (nq, 2) physical quadrature points
        self.N = N              # (nq, nloc) trace values
        self.G = G              # (nq, nloc, 2) reference gradients


# -- construction helpers ----------------------------------------------------

def build_state_space(mesh, degrees, gamma=2.0):
    return StateSpace(mesh, degrees, gamma=gamma)


def build_control_space(mesh, degrees):
    return ControlSpace(mesh, degrees)


def interpolate_state(space, f):
    """Nodal interpolant of a callable f(x1, x2) in the state space."""
    mesh = space.mesh
    coeffs = np.zeros(space.dim)
    coeffs[:mesh.num_vertices] = [f(x, y) for x, y in mesh.vertices]
    for edge_id in range(mesh.num_edges):
        q = int(space.edge_conf_degree[edge_id])
        base = int(space.edge_dof_offset[edge_id])
        va = mesh.vertices[mesh.edge_vertices[edge_id, 0]]
        vb = mesh.vertices[mesh.edge_vertices[edge_id, 1]]
        for m in range(q - 1):
            x, y = va + (m + 1) / q * (vb - va)
            coeffs[base + m] = f(x, y)
    for e in range(mesh.num_elements):
        bas = space.bases[e]
        if not bas.interior_nodes:
            continue
        pts = mesh.from_reference(e, bas.nodes[bas.interior_nodes])
        base = int(space.interior_dof_offset[e])
        for m, (x, y) in enumerate(pts):
            coeffs[base + m] = f(x, y)
    return Field(space, coeffs)


def interpolate_control(space, f):
    """Element-local nodal interpolant of f in the control space."""
    coeffs = np.zeros(space.dim)
    for e in range(space.mesh.num_elements):
        pts = space.node_coordinates(e)
        coeffs[space.element_slice(e)] = [f(x, y) for x, y in pts]
    return Field(space, coeffs)


def l2_project_control(space, f):
    """Best L2 approximation of f in the control space.

    Element-by-element mass solve with the space's assembly quadrature.
    """
    coeffs = np.zeros(space.dim)
    ctx = space.quad_context()
    for group in ctx.groups:
        nloc = group.basis.count
        for row, e in enumerate(group.ids):
            fvals = np.array([f(x, y) for x, y in group.phys[row]])
            w = group.wdet[row]
            M = group.N.T @ (w[:, None] * group.N)
            rhs = group.N.T @ (w * fvals)
            try:
                local = np.linalg.solve(M, rhs)
            except np.linalg.LinAlgError as exc:
                raise SpaceError(f"singular local mass matrix on element {e}") from exc
            coeffs[space.element_slice(int(e))] = local[:nloc]
    return Field(space, coeffs)


# -- evaluation ---------------------------------------------------------------

def evaluate(field, point):
    """Value of a field at one physical point (error if outside the domain)."""
    return evaluate_batch(field, np.atleast_2d(point))[0]


def evaluate_gradient(field, point):
    """(value, gradient) of a field at one physical point."""
    vals, grads = evaluate_batch(field, np.atleast_2d(point), gradients=True)
    return vals[0], grads[0]


def evaluate_batch(field, points, gradients=False):
    """Field values (and optionally physical gradients) at many points.

    Points on shared edges resolve to the lowest adjacent element id, so
    discontinuous control fields evaluate deterministically.
    """
    space = field.space
    mesh = space.mesh
    points = np.atleast_2d(np.asarray(points, dtype=float))
    elem_ids = mesh.locate(points)
    values = np.empty(len(points))
    grads = np.empty((len(points), 2)) if gradients else None
    order = np.argsort(elem_ids, kind="stable")
    sorted_ids = elem_ids[order]
    boundaries = np.nonzero(np.diff(sorted_ids))[0] + 1
    chunks = np.split(order, boundaries)
    for chunk in chunks:
        if chunk.size == 0:
            continue
        e = int(elem_ids[chunk[0]])
        local = space.element_local(field, e)
        ref = mesh.to_reference(e, points[chunk])
        bas = space.bases[e]
        values[chunk] = bas.eval(ref) @ local
        if gradients:
            gref = np.einsum("mid,i->md", bas.eval_gradients(ref), local)
            grads[chunk] = gref @ mesh.jac_inv[e]
    return (values, grads) if gradients else values


# -- norms --------------------------------------------------------------------

def _norm_sq_parts(field):
    space = field.space
    mesh = space.mesh
    ctx = space.quad_context()
    locals_ = space.local_coefficients(field)
    l2_sq = 0.0
    grad_sq = 0.0
    for group in ctx.groups:
        if isinstance(locals_, np.ndarray):
            C = locals_[group.ids]
        else:
            C = np.stack([locals_[int(e)] for e in group.ids])
        vals = C @ group.N.T                       # (ng, nq)
        l2_sq += float(np.sum(group.wdet * vals ** 2))
        gref = np.einsum("qid,gi->gqd", group.G, C)
        jinv = mesh.jac_inv[group.ids]             # (ng, 2, 2)
        gphys = np.einsum("gqd,gde->gqe", gref, jinv)
        grad_sq += float(np.sum(group.wdet * np.sum(gphys ** 2, axis=2)))
    return l2_sq, grad_sq


def l2_norm(field):
    l2_sq, _ = _norm_sq_parts(field)
    return np.sqrt(l2_sq)


def h1_norm(field):
    """Full H1 norm sqrt(|v|_L2^2 + |grad v|_L2^2)."""
    l2_sq, grad_sq = _norm_sq_parts(field)
    return np.sqrt(l2_sq + grad_sq)
