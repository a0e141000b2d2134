"""Projected fixed-point iteration for the discrete optimal control problem.

One cycle solves the adjoint equation for the current state, projects
-(beta/lam) z onto the admissible set nodally, and re-solves the state
equation; the loop stops when consecutive adjoint iterates differ by at
most tol in the H1 norm.  After the stopping test the control and state
are rebuilt once from the accepted adjoint so the returned triple
satisfies the nodal projection identity exactly.
"""

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assembly import (
    AssemblyError,
    assemble_adjoint_rhs,
    assemble_domain_mass,
    assemble_robin_stiffness,
    evaluate_J,
)
from .linsolve import SpdSolver
from .spaces import Field, h1_norm


class NonConvergenceError(RuntimeError):
    """Optimizer hit max_iter; carries the iteration log."""

    def __init__(self, message, log):
        super().__init__(message)
        self.log = log


@dataclass
class OptimizerConfig:
    tol: float = 1e-10
    max_iter: int = 500
    relaxation: float = 1.0
    initial_control: Optional[Field] = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0.0 < self.relaxation <= 1.0:
            raise ValueError("relaxation must lie in (0, 1]")


@dataclass
class Triple:
    """Discrete control, state, and adjoint fields."""

    u: Field
    y: Field
    z: Field


@dataclass
class IterationRecord:
    n: int
    z_increment_h1: float        # nan on the first pass
    J: float
    active_nodes: int


@dataclass
class IterationLog:
    records: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self):
        return self.records[-1].n if self.records else 0

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            self.write_csv(fh)

    def write_csv(self, fh):
        writer = csv.writer(fh)
        writer.writerow(["iter", "z_increment_H1", "J", "active_nodes"])
        for rec in self.records:
            inc = "" if np.isnan(rec.z_increment_h1) else f"{rec.z_increment_h1:.17g}"
            writer.writerow([rec.n, inc, f"{rec.J:.17g}", rec.active_nodes])

    def csv_text(self):
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


class ControlProblem:
    """Assembled operators of the discrete problem on one mesh."""

    def __init__(self, state_space, control_space, data, solve_tol=1e-12):
        if state_space.mesh is not control_space.mesh:
            raise AssemblyError("state and control spaces live on different meshes")
        self.state_space = state_space
        self.control_space = control_space
        self.data = data
        self.A = assemble_robin_stiffness(state_space, data)
        self.coupling = assemble_domain_mass(state_space, control_space, 1.0)
        self.solver = SpdSolver(self.A, tol=solve_tol)
        self._update_tables = None

    # -- single steps ------------------------------------------------------

    def solve_state(self, u):
        """State y with a(y, v) = (beta*u, v) for all discrete v."""
        rhs = self.data.beta * (self.coupling @ u.coeffs)
        x, _ = self.solver.solve(rhs)
        return Field(self.state_space, x)

    def solve_adjoint(self, y):
        """Adjoint z driven by the observation residuals of y."""
        rhs = assemble_adjoint_rhs(self.state_space, y, self.data)
        x, _ = self.solver.solve(rhs)
        return Field(self.state_space, x)

    def state_values_at_control_nodes(self, z):
        """Evaluate a state field at every control-space nodal point."""
        if self._update_tables is None:
            tables = {}
            for e in range(self.control_space.mesh.num_elements):
                key = (self.state_space.bases[e].degree, self.control_space.bases[e].degree)
                if key not in tables:
                    tables[key] = self.state_space.bases[e].eval(
                        self.control_space.bases[e].nodes)
            self._update_tables = tables
        out = np.empty(self.control_space.dim)
        for e in range(self.control_space.mesh.num_elements):
            key = (self.state_space.bases[e].degree, self.control_space.bases[e].degree)
            N = self._update_tables[key]
            out[self.control_space.element_slice(e)] = N @ self.state_space.element_local(z, e)
        return out

    def update_control(self, z, u_prev=None, relaxation=1.0):
        """Nodal projection max(u_a, -(beta/lam) z) with optional relaxation."""
        data = self.data
        raw = -(data.beta / data.lam) * self.state_values_at_control_nodes(z)
        projected = np.maximum(data.u_a, raw)
        if relaxation < 1.0 and u_prev is not None:
            coeffs = (1.0 - relaxation) * u_prev.coeffs + relaxation * projected
        else:
            coeffs = projected
        return Field(self.control_space, coeffs)

    def objective(self, u, y):
        return evaluate_J(u, y, self.data)

    def _active_count(self, u):
        return int(np.sum(u.coeffs <= self.data.u_a))

    # -- the fixed-point loop ------------------------------------------------

    def run(self, config=None):
        config = config or OptimizerConfig()
        if config.initial_control is not None:
            u = config.initial_control.copy()
            if u.space is not self.control_space:
                raise AssemblyError("initial control belongs to a different space")
        else:
            u = Field(self.control_space,
                      np.full(self.control_space.dim, max(self.data.u_a, 0.0)))
        y = self.solve_state(u)
        log = IterationLog()
        z_prev = None
        z = None
        for n in range(config.max_iter):
            z = self.solve_adjoint(y)
            inc = h1_norm(z - z_prev) if z_prev is not None else float("nan")
            log.records.append(IterationRecord(n, inc, self.objective(u, y),
                                               self._active_count(u)))
            if z_prev is not None and inc <= config.tol:
                log.converged = True
                break
            u = self.update_control(z, u_prev=u, relaxation=config.relaxation)
            y = self.solve_state(u)
            z_prev = z
        if not log.converged:
            raise NonConvergenceError(
                f"no convergence within {config.max_iter} iterations "
                f"(last increment {log.records[-1].z_increment_h1:.3e})", log)
        u = self.update_control(z, u_prev=u, relaxation=config.relaxation)
        y = self.solve_state(u)
        return Triple(u, y, z), log

    # -- diagnostics ---------------------------------------------------------

    def check_discrete_optimality(self, t, n_probes=5, seed=0):
        """Residual norms and variational-inequality probes for a triple.

        Returns a dict with the state/adjoint Galerkin residual norms, the
        minimum of (beta z + lam u, w - u) over a probe set of feasible
        w, and the largest |lam u + beta z| over inactive control nodes.
        """
        data = self.data
        state_rhs = data.beta * (self.coupling @ t.u.coeffs)
        state_res = float(np.linalg.norm(self.A @ t.y.coeffs - state_rhs))
        adj_rhs = assemble_adjoint_rhs(self.state_space, t.y, data)
        adjoint_res = float(np.linalg.norm(self.A @ t.z.coeffs - adj_rhs))

        z_nodes = self.state_values_at_control_nodes(t.z)
        gradient_nodes = data.lam * t.u.coeffs + data.beta * z_nodes
        inactive = t.u.coeffs > data.u_a
        inactive_stationarity = float(np.max(np.abs(gradient_nodes[inactive]))) \
            if np.any(inactive) else 0.0

        # (beta z + lam u, w - u) over feasible probes via the mass pairing
        mass_cc = assemble_domain_mass(self.control_space, self.control_space, 1.0)
        grad_vec = mass_cc @ gradient_nodes
        rng = np.random.default_rng(seed)
        probes = [np.full(self.control_space.dim, data.u_a),
                  t.u.coeffs + 1.0,
                  np.maximum(data.u_a, -(data.beta / data.lam) * z_nodes),
                  2.0 * t.u.coeffs - data.u_a]
        for _ in range(max(0, n_probes - len(probes))):
            probes.append(t.u.coeffs + rng.uniform(0.0, 1.0, self.control_space.dim))
        vi_min = min(float(grad_vec @ (w - t.u.coeffs)) for w in probes)
        return {
            "state_residual": state_res,
            "adjoint_residual": adjoint_res,
            "vi_probe_min": vi_min,
            "inactive_stationarity": inactive_stationarity,
        }


def run(data, config, spaces):
    """Convenience wrapper: spaces = (state_space, control_space)."""
    state_space, control_space = spaces
    problem = ControlProblem(state_space, control_space, data)
    return problem.run(config)
