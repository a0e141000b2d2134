"""Seven-part residual error indicator for the coupled optimality system.

Element terms (weights h_t^2/p_t^2, L2 norms over the element):
  1: interior residual of the state equation,   beta*u + Lap y
  4: interior residual of the adjoint equation, lam_omega*(y - y_omega) + Lap z
  7: elementwise gradient of the control gradient, grad(lam*u + beta*z)
Edge terms (weights h_e/p_e):
  2: normal-derivative jump of y across interior edges
  3: Robin residual of y on boundary edges,  alpha*y + dn y
  5: normal-derivative jump of z across interior edges
  6: Robin residual of z on boundary edges,  lam_gamma*(y - y_gamma) - alpha*z - dn z
Interior jumps are (left trace - right trace).n_e with the stored normal;
each edge counts once.  Squares make every term orientation independent.
"""

import csv
import io
import json

import numpy as np

from .elements import ShapeBasis, gauss1d, edge_ref_points
from .meshkit import edge_degrees
from .spaces import SpaceError


class EstimatorBreakdown:
    """Global and local values of the error indicator.

    eta_sq : length-7 array of the squared global components
    total_sq : their sum
    per_element : (ne, 3) squared local contributions of parts 1, 4, 7
    per_edge : (nE, 4) squared local contributions of parts 2, 3, 5, 6
    """

    def __init__(self, mesh, eta_sq, per_element, per_edge):
        self.mesh = mesh
        self.eta_sq = np.asarray(eta_sq, dtype=float)
        self.total_sq = float(np.sum(self.eta_sq))
        self.per_element = per_element
        self.per_edge = per_edge

    def to_json(self, path=None):
        doc = {
            "eta_sq": self.eta_sq.tolist(),
            "total_sq": self.total_sq,
            "per_element": {
                "eta1_sq": self.per_element[:, 0].tolist(),
                "eta4_sq": self.per_element[:, 1].tolist(),
                "eta7_sq": self.per_element[:, 2].tolist(),
            },
            "per_edge": {
                "eta2_sq": self.per_edge[:, 0].tolist(),
                "eta3_sq": self.per_edge[:, 1].tolist(),
                "eta5_sq": self.per_edge[:, 2].tolist(),
                "eta6_sq": self.per_edge[:, 3].tolist(),
            },
        }
        text = json.dumps(doc, indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def csv_row(self):
        """One-row CSV in component order 1..7 followed by the total."""
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow([f"eta{i}_sq" for i in range(1, 8)] + ["eta_sq"])
        writer.writerow([f"{v:.8e}" for v in self.eta_sq] + [f"{self.total_sq:.8e}"])
        return buf.getvalue()


def _stack_locals(space, field, ids):
    locals_ = space.local_coefficients(field)
    if isinstance(locals_, np.ndarray):
        return locals_[ids]
    return np.stack([locals_[int(e)] for e in ids])


def _phys_gradients(G, jinv_batch, coeffs):
    """einsum helper: reference gradient tables -> physical field gradients."""
    gref = np.einsum("qid,gi->gqd", G, coeffs)
    return np.einsum("gqd,gde->gqe", gref, jinv_batch)


def _element_terms(group, ids, triple, data, mesh, degrees, ys, zs, us, per_element):
    """Accumulate the squared parts 1, 4, 7 for one block of elements."""
    Cy = _stack_locals(ys, triple.y, ids)
    Cz = _stack_locals(zs, triple.z, ids)
    Cu = _stack_locals(us, triple.u, ids)
    sub = np.searchsorted(group.ids, ids)        # rows of these ids inside the group
    jinv = mesh.jac_inv[ids]
    wdet = group.wdet[sub]
    phys = group.phys[sub]
    K = np.einsum("gde,gfe->gdf", jinv, jinv)    # B^-1 B^-T
    H = group.hessians()                         # (nq, nloc, 2, 2)
    lap_table = np.einsum("qidf,gdf->gqi", H, K)
    lap_y = np.einsum("gqi,gi->gq", lap_table, Cy)
    lap_z = np.einsum("gqi,gi->gq", lap_table, Cz)

    ctrl_bas = us.bases[int(ids[0])]
    Nc = group.N if ctrl_bas is group.basis else ctrl_bas.eval(group.rule.points)
    Gc = group.G if ctrl_bas is group.basis else ctrl_bas.eval_gradients(group.rule.points)
    uq = Cu @ Nc.T
    x1, x2 = phys[:, :, 0], phys[:, :, 1]

    res1 = data.beta * uq + lap_y
    res4 = data.lam_omega * ((Cy @ group.N.T) - data.y_omega(x1, x2)) + lap_z

    grad_u = np.einsum("qid,gi->gqd", Gc, Cu)
    grad_u = np.einsum("gqd,gde->gqe", grad_u, jinv)
    grad_z = _phys_gradients(group.G, jinv, Cz)
    grad7 = data.lam * grad_u + data.beta * grad_z

    wfac = (mesh.diameters[ids] / degrees[ids]) ** 2
    per_element[ids, 0] = wfac * np.sum(wdet * res1 ** 2, axis=1)
    per_element[ids, 1] = wfac * np.sum(wdet * res4 ** 2, axis=1)
    per_element[ids, 2] = wfac * np.sum(wdet * np.sum(grad7 ** 2, axis=2), axis=1)


def estimate(triple, data, extra_exactness=3):
    """Compute the full indicator breakdown for a converged triple.

    extra_exactness is added on top of the 2p baseline of every rule;
    raising it probes quadrature sensitivity of the totals.
    """
    ys, zs, us = triple.y.space, triple.z.space, triple.u.space
    if zs is not ys:
        raise SpaceError("state and adjoint fields must share one space")
    if us.mesh is not ys.mesh:
        raise SpaceError("control field lives on a different mesh")
    mesh = ys.mesh
    degrees = ys.degrees
    p_e = edge_degrees(mesh, degrees)

    per_element = np.zeros((mesh.num_elements, 3))
    per_edge = np.zeros((mesh.num_edges, 4))

    # -- element terms ------------------------------------------------------
    if extra_exactness == 3:
        ctx = ys.quad_context()
    else:
        from .spaces import _VolumeContext
        ctx = _VolumeContext(ys, extra_exactness=extra_exactness)
    for group in ctx.groups:
        # split further by control degree so one basis table serves the block
        for pc in sorted(set(us.degrees[group.ids].tolist())):
            ids = group.ids[us.degrees[group.ids] == pc]
            _element_terms(group, ids, triple, data, mesh, degrees,
                           ys, zs, us, per_element)
    # -- edge terms -----------------------------------------------------------
    trace_cache = {}

    def traces(elem, local_edge, t):
        p = int(degrees[elem])
        key = (p, local_edge, len(t), float(t[0]))
        if key not in trace_cache:
            bas = ShapeBasis(mesh.kind, p)
            ref = edge_ref_points(mesh.kind, local_edge, t)
            trace_cache[key] = (bas.eval(ref), bas.eval_gradients(ref))
        return trace_cache[key]

    rule_cache = {}
    for edge_id in range(mesh.num_edges):
        pe = int(p_e[edge_id])
        if pe not in rule_cache:
            rule_cache[pe] = gauss1d(2 * pe + extra_exactness)
        t, w = rule_cache[pe]
        h_e = mesh.edge_length[edge_id]
        n = mesh.edge_normal[edge_id]
        eL = int(mesh.edge_left[edge_id])
        locL = int(mesh.edge_left_local[edge_id])
        NL, GL = traces(eL, locL, t)
        yloc = ys.element_local(triple.y, eL)
        zloc = zs.element_local(triple.z, eL)
        grad_yL = np.einsum("qid,i->qd", GL, yloc) @ mesh.jac_inv[eL]
        grad_zL = np.einsum("qid,i->qd", GL, zloc) @ mesh.jac_inv[eL]
        weight = h_e / pe
        if mesh.edge_is_boundary[edge_id]:
            ytr = NL @ yloc
            ztr = NL @ zloc
            phys = mesh.vertices[mesh.edge_vertices[edge_id, 0]] \
                + t[:, None] * (mesh.vertices[mesh.edge_vertices[edge_id, 1]]
                                - mesh.vertices[mesh.edge_vertices[edge_id, 0]])
            res3 = data.alpha * ytr + grad_yL @ n
            res6 = data.lam_gamma * (ytr - data.y_gamma(phys[:, 0], phys[:, 1])) \
                - data.alpha * ztr - grad_zL @ n
            per_edge[edge_id, 1] = weight * h_e * float(np.sum(w * res3 ** 2))
            per_edge[edge_id, 3] = weight * h_e * float(np.sum(w * res6 ** 2))
        else:
            eR = int(mesh.edge_right[edge_id])
            locR = int(mesh.edge_right_local[edge_id])
            tR = 1.0 - t if mesh.edge_right_reversed[edge_id] else t
            _, GR = traces(eR, locR, tR)
            yR = ys.element_local(triple.y, eR)
            zR = zs.element_local(triple.z, eR)
            grad_yR = np.einsum("qid,i->qd", GR, yR) @ mesh.jac_inv[eR]
            grad_zR = np.einsum("qid,i->qd", GR, zR) @ mesh.jac_inv[eR]
            jump_y = (grad_yL - grad_yR) @ n
            jump_z = (grad_zL - grad_zR) @ n
            per_edge[edge_id, 0] = weight * h_e * float(np.sum(w * jump_y ** 2))
            per_edge[edge_id, 2] = weight * h_e * float(np.sum(w * jump_z ** 2))

    eta_sq = np.array([
        per_element[:, 0].sum(),
        per_edge[:, 0].sum(),
        per_edge[:, 1].sum(),
        per_element[:, 1].sum(),
        per_edge[:, 2].sum(),
        per_edge[:, 3].sum(),
        per_element[:, 2].sum(),
    ])
    return EstimatorBreakdown(mesh, eta_sq, per_element, per_edge)


def local_indicator(breakdown, elem_id):
    """Element share of the squared indicator.

    Element terms count fully; interior edges split evenly between their
    two neighbors; boundary edges belong to their only element.  Summing
    over all elements recovers the squared total.
    """
    mesh = breakdown.mesh
    if not 0 <= elem_id < mesh.num_elements:
        raise IndexError(f"element id {elem_id} out of range")
    total = float(np.sum(breakdown.per_element[elem_id]))
    for edge_id in mesh.elem_edges[elem_id]:
        share = 1.0 if mesh.edge_is_boundary[edge_id] else 0.5
        total += share * float(np.sum(breakdown.per_edge[edge_id]))
    return total


def all_local_indicators(breakdown):
    mesh = breakdown.mesh
    out = breakdown.per_element.sum(axis=1)
    edge_share = breakdown.per_edge.sum(axis=1) * np.where(mesh.edge_is_boundary, 1.0, 0.5)
    for e in range(mesh.num_elements):
        out[e] += edge_share[mesh.elem_edges[e]].sum()
    return out
