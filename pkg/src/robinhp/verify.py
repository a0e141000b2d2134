"""Reference solutions, cross-mesh error norms, and convergence studies.

The reference is the same optimizer run on a fine quadrilateral grid at a
higher degree; error norms integrate squared differences on the reference
mesh's quadrature, evaluating the coarse fields there by point location.
Manufactured-solution checks drive the forward Robin solver with known
closed-form data and report least-squares convergence slopes.
"""

import csv
import hashlib
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import assemble_robin_rhs, assemble_source_rhs
from .estimator import estimate
from .linsolve import SpdSolver
from .meshkit import build_uniform_quad_mesh, build_uniform_tri_mesh
from .optimizer import ControlProblem, OptimizerConfig, Triple
from .spaces import (
    ControlSpace,
    Field,
    StateSpace,
    evaluate_batch,
)
from . import assembly


class VerifyError(ValueError):
    """Invalid verification setup."""


@dataclass
class ReferenceConfig:
    n_ref: int = 50
    p_ref: int = 3
    tol_ref: float = 1e-12
    max_iter: int = 2000

    def __post_init__(self):
        if self.n_ref < 1 or self.p_ref < 1 or self.tol_ref <= 0:
            raise VerifyError("invalid reference configuration")


@dataclass
class ErrorReport:
    u_L2: float
    y_L2: float
    y_H1: float
    z_L2: float
    z_H1: float

    def as_dict(self):
        return {"u_L2": self.u_L2, "y_L2": self.y_L2, "y_H1": self.y_H1,
                "z_L2": self.z_L2, "z_H1": self.z_H1}


@dataclass
class StudyRow:
    N: int
    p: int
    h: float
    errors: ErrorReport
    eta_sq: float
    reliability_ratio: float
    h_rate: dict = field(default_factory=dict)   # per error column, vs previous same-p row


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)

    _columns = ("u_L2", "y_L2", "y_H1", "z_L2", "z_H1")

    def compute_rates(self):
        last_by_p = {}
        for row in self.rows:
            prev = last_by_p.get(row.p)
            if prev is not None and prev.h != row.h:
                fac = np.log(prev.h / row.h)
                row.h_rate = {
                    c: float(np.log(getattr(prev.errors, c) / getattr(row.errors, c)) / fac)
                    for c in self._columns
                    if getattr(prev.errors, c) > 0 and getattr(row.errors, c) > 0
                }
            last_by_p[row.p] = row
        return self

    def write_csv(self, fh):
        writer = csv.writer(fh)
        writer.writerow(["N", "p"] + list(self._columns)
                        + ["eta_sq", "reliability_ratio"]
                        + [f"rate_{c}" for c in self._columns])
        for row in self.rows:
            rates = [f"{row.h_rate[c]:.4f}" if c in row.h_rate else ""
                     for c in self._columns]
            writer.writerow(
                [row.N, row.p]
                + [f"{getattr(row.errors, c):.8e}" for c in self._columns]
                + [f"{row.eta_sq:.8e}", f"{row.reliability_ratio:.8e}"]
                + rates)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            self.write_csv(fh)

    def csv_text(self):
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


# -- reference solutions ------------------------------------------------------

def default_cache_dir():
    env = os.environ.get("REFERENCE_CACHE_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "robinhp" / "references"


def _reference_key(data, cfg):
    if data.signature is None:
        return None
    payload = json.dumps({
        "signature": data.signature,
        "lam": data.lam, "lam_omega": data.lam_omega, "lam_gamma": data.lam_gamma,
        "alpha": data.alpha, "beta": data.beta, "u_a": data.u_a,
        "n_ref": cfg.n_ref, "p_ref": cfg.p_ref, "tol_ref": cfg.tol_ref,
        "layout": 1,
    }, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def reference_spaces(cfg):
    mesh = build_uniform_quad_mesh(cfg.n_ref)
    state = StateSpace(mesh, cfg.p_ref)
    control = ControlSpace(mesh, cfg.p_ref)
    return state, control


def compute_reference(data, cfg=None, cache_dir=None):
    """Optimizer run on the fine quad grid; disk-cached when data is signed."""
    cfg = cfg or ReferenceConfig()
    key = _reference_key(data, cfg)
    cache_path = None
    if key is not None:
        root = Path(cache_dir) if cache_dir is not None else default_cache_dir()
        cache_path = root / f"ref-{key}.npz"
    state, control = reference_spaces(cfg)
    if cache_path is not None and cache_path.exists():
        blob = np.load(cache_path)
        return Triple(Field(control, blob["u"]), Field(state, blob["y"]),
                      Field(state, blob["z"]))
    problem = ControlProblem(state, control, data)
    triple, _ = problem.run(OptimizerConfig(tol=cfg.tol_ref, max_iter=cfg.max_iter))
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        tmp = cache_path.with_suffix(".tmp.npz")
        np.savez(tmp, u=triple.u.coeffs, y=triple.y.coeffs, z=triple.z.coeffs)
        os.replace(tmp, cache_path)
    return triple


# -- cross-mesh error norms -----------------------------------------------------

def _fineness(space):
    gen = getattr(space.mesh, "generator", None)
    n = gen["n"] if gen else int(round(np.sqrt(space.mesh.num_elements)))
    return n * int(np.max(space.degrees))


def error_norms(coarse, reference):
    """L2/H1 differences integrated on the reference mesh's quadrature."""
    ref_state = reference.y.space
    ref_ctrl = reference.u.space
    if _fineness(ref_state) < _fineness(coarse.y.space):
        raise VerifyError("reference discretization is coarser than the compared run")
    mesh = ref_state.mesh
    acc = {k: 0.0 for k in ("u2", "y2", "gy2", "z2", "gz2")}
    ctx = ref_state.quad_context()
    ylocs = ref_state.local_coefficients(reference.y)
    zlocs = ref_state.local_coefficients(reference.z)
    ulocs = ref_ctrl.local_coefficients(reference.u)
    for group in ctx.groups:
        ids = group.ids
        Cy = ylocs[ids] if isinstance(ylocs, np.ndarray) else \
            np.stack([ylocs[int(e)] for e in ids])
        Cz = zlocs[ids] if isinstance(zlocs, np.ndarray) else \
            np.stack([zlocs[int(e)] for e in ids])
        Cu = ulocs[ids] if isinstance(ulocs, np.ndarray) else \
            np.stack([ulocs[int(e)] for e in ids])
        ctrl_bas = ref_ctrl.bases[int(ids[0])]
        Nc = group.N if ctrl_bas is group.basis else ctrl_bas.eval(group.rule.points)
        jinv = mesh.jac_inv[ids]
        y_ref = Cy @ group.N.T
        z_ref = Cz @ group.N.T
        u_ref = Cu @ Nc.T
        gy_ref = np.einsum("gqd,gde->gqe", np.einsum("qid,gi->gqd", group.G, Cy), jinv)
        gz_ref = np.einsum("gqd,gde->gqe", np.einsum("qid,gi->gqd", group.G, Cz), jinv)

        pts = group.phys.reshape(-1, 2)
        y_c, gy_c = evaluate_batch(coarse.y, pts, gradients=True)
        z_c, gz_c = evaluate_batch(coarse.z, pts, gradients=True)
        u_c = evaluate_batch(coarse.u, pts)
        shape = y_ref.shape
        w = group.wdet
        acc["u2"] += float(np.sum(w * (u_c.reshape(shape) - u_ref) ** 2))
        acc["y2"] += float(np.sum(w * (y_c.reshape(shape) - y_ref) ** 2))
        acc["z2"] += float(np.sum(w * (z_c.reshape(shape) - z_ref) ** 2))
        acc["gy2"] += float(np.sum(
            w * np.sum((gy_c.reshape(shape + (2,)) - gy_ref) ** 2, axis=2)))
        acc["gz2"] += float(np.sum(
            w * np.sum((gz_c.reshape(shape + (2,)) - gz_ref) ** 2, axis=2)))
    return ErrorReport(
        u_L2=float(np.sqrt(acc["u2"])),
        y_L2=float(np.sqrt(acc["y2"])),
        y_H1=float(np.sqrt(acc["y2"] + acc["gy2"])),
        z_L2=float(np.sqrt(acc["z2"])),
        z_H1=float(np.sqrt(acc["z2"] + acc["gz2"])),
    )


def reliability_ratio(errors, eta_sq):
    """(u_L2^2 + y_H1^2 + z_H1^2) / eta^2."""
    return (errors.u_L2 ** 2 + errors.y_H1 ** 2 + errors.z_H1 ** 2) / eta_sq


# -- studies --------------------------------------------------------------------

def build_run_mesh(spec):
    """spec = (kind, n, split) with kind in {'quad', 'tri'}."""
    kind, n, split = spec
    if kind == "quad":
        return build_uniform_quad_mesh(n)
    return build_uniform_tri_mesh(n, split=split)


def solve_run(data, mesh, p, tol=1e-10, max_iter=500):
    state = StateSpace(mesh, p)
    control = ControlSpace(mesh, p)
    problem = ControlProblem(state, control, data)
    triple, log = problem.run(OptimizerConfig(tol=tol, max_iter=max_iter))
    return problem, triple, log

def convergence_study(data, runs, ref_cfg=None, cache_dir=None, reference=None):
    """Solve each (mesh spec, p) run and compare against the reference.

    runs is a sequence of ((kind, n, split), p).  Returns a
    ConvergenceTable with reliability ratios and h-rates filled in.
    """
    if len(runs) < 1:
        raise VerifyError("need at least one run")
    ref_cfg = ref_cfg or ReferenceConfig()
    if reference is None:
        reference = compute_reference(data, ref_cfg, cache_dir=cache_dir)
    table = ConvergenceTable()
    for spec, p in runs:
        mesh = build_run_mesh(spec)
        if spec[1] * p >= ref_cfg.n_ref * ref_cfg.p_ref:
            raise VerifyError("run is not strictly coarser than the reference")
        _, triple, _ = solve_run(data, mesh, p)
        errors = error_norms(triple, reference)
        breakdown = estimate(triple, data)
        table.rows.append(StudyRow(
            N=mesh.num_elements, p=p, h=float(np.max(mesh.diameters)),
            errors=errors, eta_sq=breakdown.total_sq,
            reliability_ratio=reliability_ratio(errors, breakdown.total_sq)))
    return table.compute_rates()


def reliability_report(table, path=None):
    """JSON summary of the estimator reliability over a study."""
    ratios = [row.reliability_ratio for row in table.rows]
    doc = {
        "ratios": ratios,
        "max_ratio": max(ratios),
        "min_ratio": min(ratios),
        "spread": max(ratios) / min(ratios) if min(ratios) > 0 else float("inf"),
        "rows": [
            {"N": row.N, "p": row.p, "eta_sq": row.eta_sq, **row.errors.as_dict()}
            for row in table.rows
        ],
    }
    text = json.dumps(doc, indent=1)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


# -- manufactured solutions -------------------------------------------------------

def manufactured_solution():
    """Closed-form y*, grad y*, and -Lap y* for the forward-solver oracle."""

    def y_star(x1, x2):
        return np.sin(np.pi * x1) * np.sin(np.pi * x2) + x1 * x2

    def grad_y_star(x1, x2):
        gx = np.pi * np.cos(np.pi * x1) * np.sin(np.pi * x2) + x2
        gy = np.pi * np.sin(np.pi * x1) * np.cos(np.pi * x2) + x1
        return gx, gy

    def source(x1, x2):
        return 2.0 * np.pi ** 2 * np.sin(np.pi * x1) * np.sin(np.pi * x2)

    return y_star, grad_y_star, source


def solve_forward_robin(state_space, alpha, f, g):
    """Galerkin solve of the Robin problem with volume data f and
    boundary data g(x1, x2, n1, n2)."""
    data = assembly.ProblemData(lam=1.0, lam_omega=0.0, lam_gamma=0.0,
                                alpha=alpha, beta=1.0, u_a=0.0)
    A = assembly.assemble_robin_stiffness(state_space, data)
    b = assemble_source_rhs(state_space, f)
    if g is not None:
        b = b + assemble_robin_rhs(state_space, g)
    x, _ = SpdSolver(A).solve(b)
    return Field(state_space, x)


def _field_error_vs_exact(field, exact, exact_grad):
    space = field.space
    mesh = space.mesh
    ctx = space.quad_context()
    locals_ = space.local_coefficients(field)
    l2 = 0.0
    h1g = 0.0
    for group in ctx.groups:
        C = locals_[group.ids] if isinstance(locals_, np.ndarray) else \
            np.stack([locals_[int(e)] for e in group.ids])
        x1, x2 = group.phys[:, :, 0], group.phys[:, :, 1]
        diff = C @ group.N.T - exact(x1, x2)
        l2 += float(np.sum(group.wdet * diff ** 2))
        gphys = np.einsum("gqd,gde->gqe",
                          np.einsum("qid,gi->gqd", group.G, C), mesh.jac_inv[group.ids])
        gx, gy = exact_grad(x1, x2)
        h1g += float(np.sum(group.wdet * ((gphys[:, :, 0] - gx) ** 2
                                          + (gphys[:, :, 1] - gy) ** 2)))
    return np.sqrt(l2), np.sqrt(l2 + h1g)


def manufactured_check(p, levels, kind="quad", alpha=1.0):
    """Errors and convergence slopes of the forward solver against y*.

    Returns a dict with per-level L2/H1 errors and the least-squares
    slopes in h.
    """
    if p < 1:
        raise VerifyError("p must be >= 1")
    y_star, grad_y_star, source = manufactured_solution()

    def g(x1, x2, n1, n2):
        gx, gy = grad_y_star(x1, x2)
        return gx * n1 + gy * n2 + alpha * y_star(x1, x2)

    hs, l2s, h1s = [], [], []
    for n in levels:
        mesh = build_uniform_quad_mesh(n) if kind == "quad" \
            else build_uniform_tri_mesh(n)
        space = StateSpace(mesh, p)
        yh = solve_forward_robin(space, alpha, source, g)
        e_l2, e_h1 = _field_error_vs_exact(yh, y_star, grad_y_star)
        hs.append(float(np.max(mesh.diameters)))
        l2s.append(e_l2)
        h1s.append(e_h1)
    report = {"p": p, "levels": list(levels), "h": hs, "l2": l2s, "h1": h1s}
    if len(levels) >= 2:
        log_h = np.log(hs)
        report["l2_slope"] = float(np.polyfit(log_h, np.log(l2s), 1)[0])
        report["h1_slope"] = float(np.polyfit(log_h, np.log(h1s), 1)[0])
    return report
