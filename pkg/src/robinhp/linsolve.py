"""Solvers for the symmetric positive definite Galerkin systems.

Small and medium systems go through a sparse direct factorization in
symmetric mode with a positive-pivot check; very large ones fall back to
Jacobi-preconditioned conjugate gradients.  Both paths are deterministic
for fixed inputs.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DIRECT_DIM_LIMIT = 200_000
DEFAULT_TOL = 1e-12


class NotSpdError(RuntimeError):
    """Matrix failed the symmetry or positive-pivot test."""


class IterationLimitError(RuntimeError):
    """Iterative solve hit the iteration cap; carries the report."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


@dataclass
class SolveReport:
    method: str          # "cholesky" or "cg"
    iterations: int
    residual_norm: float


def _check_symmetric(A):
    gap = abs(A - A.T)
    scale = abs(A).max() or 1.0
    if gap.max() > 1e-12 * scale:
        raise NotSpdError("matrix is not symmetric")


class SpdSolver:
    """Factorize once, solve many right-hand sides."""

    def __init__(self, A, tol=DEFAULT_TOL, direct_limit=DIRECT_DIM_LIMIT):
        A = sp.csr_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise NotSpdError("matrix is not square")
        _check_symmetric(A)
        self.A = A
        self.tol = float(tol)
        self.n = A.shape[0]
        if self.n <= direct_limit:
            self.method = "cholesky"
            self._lu = spla.splu(A.tocsc(), diag_pivot_thresh=0.0,
                                 options=dict(SymmetricMode=True))
            if np.any(self._lu.U.diagonal() <= 0.0):
                raise NotSpdError("negative pivot: matrix is not positive definite")
        else:
            self.method = "cg"
            diag = A.diagonal()
            if np.any(diag <= 0.0):
                raise NotSpdError("non-positive diagonal entry")
            self._inv_diag = 1.0 / diag

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        norm_b = np.linalg.norm(b)
        if norm_b == 0.0:
            return np.zeros_like(b), SolveReport(self.method, 0, 0.0)
        if self.method == "cholesky":
            x = self._lu.solve(b)
            res = np.linalg.norm(self.A @ x - b)
            # one refinement pass if rounding left a visible residual
            if res > self.tol * norm_b:
                x = x + self._lu.solve(b - self.A @ x)
                res = np.linalg.norm(self.A @ x - b)
            if not np.all(np.isfinite(x)):
                raise NotSpdError("direct solve produced non-finite values")
            return x, SolveReport("cholesky", 0, float(res))
        return self._solve_cg(b, norm_b)

    def _solve_cg(self, b, norm_b):
        x = np.zeros_like(b)
        r = b.copy()
        z = self._inv_diag * r
        p = z.copy()
        rz = float(r @ z)
        max_iter = 10 * self.n
        target = self.tol * norm_b
        for it in range(1, max_iter + 1):
            Ap = self.A @ p
            pAp = float(p @ Ap)
            if pAp <= 0.0:
                raise NotSpdError("CG breakdown: non-positive curvature")
            alpha = rz / pAp
            x += alpha * p
            r -= alpha * Ap
            res = np.linalg.norm(r)
            if res <= target:
                return x, SolveReport("cg", it, float(res))
            z = self._inv_diag * r
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        report = SolveReport("cg", max_iter, float(np.linalg.norm(self.A @ x - b)))
        raise IterationLimitError("CG did not converge within the iteration cap", report)


def solve_spd(A, b, tol=DEFAULT_TOL):
    """One-shot SPD solve; returns (x, SolveReport)."""
    if tol <= 0:
        raise ValueError("tol must be > 0")
    return SpdSolver(A, tol=tol).solve(b)
