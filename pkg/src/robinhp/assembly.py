"""Galerkin assembly of the Robin bilinear form, mass forms, and load vectors.

All integrals use the per-element quadrature of the space's cached
context (exactness 2p+3), so the stiffness form, the objective, and the
error indicator integrate with one consistent rule.  Matrices come back
as scipy CSR; assembly is element-ordered and therefore bitwise
reproducible.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.io
import scipy.sparse as sp

from .spaces import StateSpace, ControlSpace


class AssemblyError(ValueError):
    """Mismatched spaces or invalid problem data."""


def constant_fn(c):
    """Pointwise function returning c, broadcasting over array inputs."""
    c = float(c)

    def f(x1, x2):
        return c + 0.0 * np.asarray(x1)

    return f


@dataclass
class ProblemData:
    """Coefficients and targets of the control problem.

    y_omega and y_gamma are callables f(x1, x2) accepting numpy arrays.
    y_gamma defaults to the trace of y_omega on the boundary.  signature,
    when set, is a stable string identifying the data for caching.
    """

    lam: float
    lam_omega: float
    lam_gamma: float
    alpha: float
    beta: float
    u_a: float
    y_omega: Callable = field(default_factory=lambda: constant_fn(0.0))
    y_gamma: Optional[Callable] = None
    signature: Optional[str] = None

    def __post_init__(self):
        if not self.lam > 0:
            raise AssemblyError("lam must be > 0")
        if not self.alpha > 0:
            raise AssemblyError("alpha must be > 0 (coercivity)")
        if self.lam_omega < 0 or self.lam_gamma < 0:
            raise AssemblyError("observation weights must be >= 0")
        if self.y_gamma is None:
            self.y_gamma = self.y_omega


def _local_dense(space, e, local_matrix):
    """Map a local nodal matrix to (gids, dense block) honoring constraints."""
    if space.element_dofs is not None:
        return space.element_dofs[e], local_matrix
    gids, C = space.element_maps[e]
    if C is None:
        return gids, local_matrix
    return gids, C.T @ local_matrix @ C


def _pair_tables(row_space, col_space, e, rule):
    row_bas = row_space.bases[e]
    col_bas = col_space.bases[e]
    return row_bas.eval(rule.points), col_bas.eval(rule.points)


def _assemble_from_blocks(rows_list, cols_list, vals_list, shape):
    if rows_list:
        rows = np.concatenate(rows_list)
        cols = np.concatenate(cols_list)
        vals = np.concatenate(vals_list)
    else:
        rows = cols = vals = np.zeros(0)
    return sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()


def assemble_domain_mass(space_rows, space_cols, weight):
    """weight * integral of chi_j phi_i over the domain.

    Supports state x state, state x control, and control x control pairs
    on one mesh.  The state x control pair realizes the coupling term of
    the state equation's right-hand side.
    """
    if space_rows.mesh is not space_cols.mesh:
        raise AssemblyError("row and column spaces live on different meshes")
    ctx = space_rows.quad_context()
    rows_l, cols_l, vals_l = [], [], []
    for group in ctx.groups:
        rule = group.rule
        for relem, e in enumerate(group.ids):
            e = int(e)
            Nr, Nc = _pair_tables(space_rows, space_cols, e, rule)
            w = group.wdet[relem]
            local = weight * (Nr.T @ (w[:, None] * Nc))
            gr, left = _row_map(space_rows, e, local)
            gc, block = _col_map(space_cols, e, left)
            rr, cc = np.meshgrid(gr, gc, indexing="ij")
            rows_l.append(rr.ravel())
            cols_l.append(cc.ravel())
            vals_l.append(block.ravel())
    return _assemble_from_blocks(rows_l, cols_l, vals_l, (space_rows.dim, space_cols.dim))


def _row_map(space, e, local):
    """Apply row-side constraint transpose; returns (gids, transformed)."""
    if isinstance(space, ControlSpace):
        gids = np.arange(space.offsets[e], space.offsets[e + 1], dtype=np.int64)
        return gids, local
    if space.element_dofs is not None:
        return space.element_dofs[e], local
    gids, C = space.element_maps[e]
    return gids, (local if C is None else C.T @ local)


def _col_map(space, e, local):
    if isinstance(space, ControlSpace):
        gids = np.arange(space.offsets[e], space.offsets[e + 1], dtype=np.int64)
        return gids, local
    if space.element_dofs is not None:
        return space.element_dofs[e], local
    gids, C = space.element_maps[e]
    return gids, (local if C is None else local @ C)


def assemble_robin_stiffness(space, data):
    """A_ij = int grad(phi_j).grad(phi_i) + int_G alpha phi_j phi_i."""
    if not isinstance(space, StateSpace):
        raise AssemblyError("Robin stiffness needs the continuous state space")
    mesh = space.mesh
    ctx = space.quad_context()
    rows_l, cols_l, vals_l = [], [], []
    for group in ctx.groups:
        jinv = mesh.jac_inv[group.ids]
        gphys = np.einsum("qid,gde->gqie", group.G, jinv)
        K = np.einsum("gqie,gqje,gq->gij", gphys, gphys, group.wdet, optimize=True)
        for relem, e in enumerate(group.ids):
            gr, blk = _row_map(space, int(e), K[relem])
            gc, blk = _col_map(space, int(e), blk)
            rr, cc = np.meshgrid(gr, gc, indexing="ij")
            rows_l.append(rr.ravel())
            cols_l.append(cc.ravel())
            vals_l.append(blk.ravel())
    A = _assemble_from_blocks(rows_l, cols_l, vals_l, (space.dim, space.dim))
    return A + assemble_boundary_mass(space, data.alpha)


def assemble_boundary_mass(space, weight):
    """B_ij = weight * int_G phi_j phi_i over boundary edges."""
    if not isinstance(space, StateSpace):
        raise AssemblyError("boundary mass needs the continuous state space")
    bctx = space.boundary_context()
    rows_l, cols_l, vals_l = [], [], []
    for be in bctx.edges:
        local = weight * (be.N.T @ (be.weights[:, None] * be.N))
        gr, blk = _row_map(space, be.elem, local)
        gc, blk = _col_map(space, be.elem, blk)
        rr, cc = np.meshgrid(gr, gc, indexing="ij")
        rows_l.append(rr.ravel())
        cols_l.append(cc.ravel())
        vals_l.append(blk.ravel())
    return _assemble_from_blocks(rows_l, cols_l, vals_l, (space.dim, space.dim))


def assemble_source_rhs(space, f):
    """Load vector b_i = int f phi_i (manufactured-solution hook)."""
    ctx = space.quad_context()
    b = np.zeros(space.dim)
    for group in ctx.groups:
        fvals = f(group.phys[:, :, 0], group.phys[:, :, 1])
        local = np.einsum("gq,qi->gi", group.wdet * fvals, group.N)
        for relem, e in enumerate(group.ids):
            space.scatter_add(b, int(e), local[relem])
    return b


def assemble_robin_rhs(space, g):
    """Load vector b_i = int_G g phi_i with g(x1, x2, n1, n2).

    Test hook for inhomogeneous Robin data; the production problem has
    homogeneous boundary data.
    """
    mesh = space.mesh
    bctx = space.boundary_context()
    b = np.zeros(space.dim)
    for be in bctx.edges:
        n = mesh.edge_normal[be.edge_id]
        gvals = g(be.phys[:, 0], be.phys[:, 1], n[0], n[1])
        space.scatter_add(b, be.elem, be.N.T @ (be.weights * gvals))
    return b


def assemble_adjoint_rhs(space, y_field, data):
    """b_i = lam_omega (y-y_omega, phi_i) + lam_gamma (y-y_gamma, phi_i)_G."""
    if y_field.space is not space:
        raise AssemblyError("state field does not belong to the given space")
    mesh = space.mesh
    b = np.zeros(space.dim)
    ctx = space.quad_context()
    locals_ = space.local_coefficients(y_field)
    if data.lam_omega != 0.0:
        for group in ctx.groups:
            C = locals_[group.ids] if isinstance(locals_, np.ndarray) else \
                np.stack([locals_[int(e)] for e in group.ids])
            yq = C @ group.N.T
            resid = yq - data.y_omega(group.phys[:, :, 0], group.phys[:, :, 1])
            local = data.lam_omega * np.einsum("gq,qi->gi", group.wdet * resid, group.N)
            for relem, e in enumerate(group.ids):
                space.scatter_add(b, int(e), local[relem])
    if data.lam_gamma != 0.0:
        for be in space.boundary_context().edges:
            local_y = space.element_local(y_field, be.elem)
            ytr = be.N @ local_y
            resid = ytr - data.y_gamma(be.phys[:, 0], be.phys[:, 1])
            space.scatter_add(b, be.elem, data.lam_gamma * (be.N.T @ (be.weights * resid)))
    return b


def evaluate_J(u, y, data):
    """Objective lam_omega/2 |y-y_omega|^2 + lam_gamma/2 |y-y_gamma|^2_G
    + lam/2 |u|^2 by quadrature."""
    ys = y.space
    us = u.space
    if ys.mesh is not us.mesh:
        raise AssemblyError("control and state fields live on different meshes")
    total = 0.0
    if data.lam_omega != 0.0:
        ctx = ys.quad_context()
        locals_ = ys.local_coefficients(y)
        for group in ctx.groups:
            C = locals_[group.ids] if isinstance(locals_, np.ndarray) else \
                np.stack([locals_[int(e)] for e in group.ids])
            yq = C @ group.N.T
            resid = yq - data.y_omega(group.phys[:, :, 0], group.phys[:, :, 1])
            total += 0.5 * data.lam_omega * float(np.sum(group.wdet * resid ** 2))
    if data.lam_gamma != 0.0:
        for be in ys.boundary_context().edges:
            ytr = be.N @ ys.element_local(y, be.elem)
            resid = ytr - data.y_gamma(be.phys[:, 0], be.phys[:, 1])
            total += 0.5 * data.lam_gamma * float(np.sum(be.weights * resid ** 2))
    ctx_u = us.quad_context()
    locals_u = us.local_coefficients(u)
    for group in ctx_u.groups:
        C = locals_u[group.ids] if isinstance(locals_u, np.ndarray) else \
            np.stack([locals_u[int(e)] for e in group.ids])
        uq = C @ group.N.T
        total += 0.5 * data.lam * float(np.sum(group.wdet * uq ** 2))
    return total


def export_matrix_market(A, path):
    """Write a sparse matrix in MatrixMarket coordinate text format."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(A))
