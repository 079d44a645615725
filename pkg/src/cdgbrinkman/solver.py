"""Sparse symmetric indefinite solves for the saddle system.

Default backend: SuperLU direct factorization with the (deterministic)
COLAMD ordering.  Fallback backend: MINRES with an SPD block-Jacobi
preconditioner built from per-cell velocity blocks, the pressure mass plus
stabilizer diagonal blocks, and a unit multiplier block.  Backends agree to
the requested residual tolerance.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import cho_factor, cho_solve

__all__ = ["Solution", "SolverError", "SingularSystemError", "solve"]


class SolverError(Exception):
    """Numerical failure in the linear solve."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = residual_history or []


class SingularSystemError(SolverError):
    """The saddle matrix factored with a zero pivot."""


@dataclass
class Solution:
    """Velocity/pressure coefficients, multiplier, and solve diagnostics."""

    u: np.ndarray
    p: np.ndarray
    multiplier: float
    residual: float
    method: str
    stats: dict = field(default_factory=dict)


def _relative_residual(M, x, rhs):
    nrm = np.linalg.norm(rhs)
    if nrm == 0.0:
        return float(np.linalg.norm(M @ x))
    return float(np.linalg.norm(M @ x - rhs) / nrm)


def _diagnose_singular(system):
    """Attribute a singular factorization to a block, best effort."""
    try:
        spla.splu(system.A.tocsc(), permc_spec="COLAMD")
    except RuntimeError:
        return "velocity block A"
    return "pressure/multiplier block (zero-mean constraint missing?)"


def _solve_direct(system, M, rhs, rtol):
    # symmetric Jacobi equilibration plus two refinement sweeps keeps the
    # forward error near roundoff even for high-degree target bases
    d = np.abs(M.diagonal())
    d[d == 0.0] = 1.0
    scale = 1.0 / np.sqrt(d)
    Ms = (sp.diags(scale) @ M @ sp.diags(scale)).tocsc()
    try:
        lu = spla.splu(Ms, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularSystemError(
            f"factorization hit a zero pivot in the {_diagnose_singular(system)}"
        ) from exc
    x = scale * lu.solve(scale * rhs)
    for _ in range(2):
        x = x + scale * lu.solve(scale * (rhs - M @ x))
    res = _relative_residual(M, x, rhs)
    if not np.isfinite(res) or res > rtol:
        raise SingularSystemError(
            f"direct solve residual {res:.3e} exceeds {rtol:.1e}; "
            f"suspect the {_diagnose_singular(system)}")
    return x, res, {"nnz_factor": int(lu.L.nnz + lu.U.nnz)}


def _block_jacobi_preconditioner(system, disc):
    """SPD per-cell preconditioner: A blocks, pressure mass + S diagonal, 1."""
    n_u, n_p = system.n_u, system.n_p
    A = system.A.tocsc()
    S = system.S.tocsc()
    factors = []
    slices = []
    for c in range(disc.mesh.n_cells):
        s0 = disc.velocity_slice(c, 0)
        sl = slice(s0.start, s0.start + 2 * disc.dim_k)
        blk = A[sl, sl].toarray()
        factors.append(cho_factor(blk, lower=True))
        slices.append(sl)
    pfactors = []
    pslices = []
    for c in range(disc.mesh.n_cells):
        sl = disc.pressure_slice(c)
        ctx = disc.contexts[c]
        blk = ctx.block_p.gram + S[sl, sl].toarray()
        pfactors.append(cho_factor(blk, lower=True))
        pslices.append(sl)

    def apply(r):
        out = np.empty_like(r)
        for sl, f in zip(slices, factors):
            out[sl] = cho_solve(f, r[sl])
        for sl, f in zip(pslices, pfactors):
            off = slice(n_u + sl.start, n_u + sl.stop)
            out[off] = cho_solve(f, r[off])
        out[n_u + n_p:] = r[n_u + n_p:]
        return out

    n = n_u + n_p + 1
    return spla.LinearOperator((n, n), matvec=apply)


def _solve_krylov(system, M, rhs, rtol, disc, maxiter):
    if disc is None:
        raise ValueError("krylov backend needs the discretization for its "
                         "block preconditioner")
    precond = _block_jacobi_preconditioner(system, disc)
    history = []
    rhs_norm = np.linalg.norm(rhs)

    def callback(xk):
        history.append(_relative_residual(M, xk, rhs))

    # tighten the iteration tolerance; the true residual is checked below
    x, info = spla.minres(M, rhs, M=precond, rtol=min(rtol * 1e-2, 1e-10),
                          maxiter=maxiter, callback=callback)
    res = _relative_residual(M, x, rhs)
    if rhs_norm == 0.0 and res == 0.0:
        return x, res, {"iterations": len(history)}
    if res > rtol:
        raise SolverError(
            f"MINRES stalled at relative residual {res:.3e} "
            f"(target {rtol:.1e}, {len(history)} iterations)",
            residual_history=history)
    return x, res, {"iterations": len(history)}


def solve(system, method="direct", rtol=1e-9, disc=None, maxiter=None):
    """Solve the constrained saddle system to a relative residual <= rtol.

    Parameters
    ----------
    system : SaddleSystem
    method : "direct" (SuperLU) or "krylov" (preconditioned MINRES)
    disc : Discretization, required by the krylov backend
    """
    M = system.matrix(constrained=True)
    rhs = system.rhs(constrained=True)
    if method == "direct":
        x, res, stats = _solve_direct(system, M, rhs, rtol)
    elif method == "krylov":
        if maxiter is None:
            maxiter = 50 * M.shape[0]
        x, res, stats = _solve_krylov(system, M, rhs, rtol, disc, maxiter)
    else:
        raise ValueError(f"unknown solver method {method!r}")
    n_u, n_p = system.n_u, system.n_p
    u = x[:n_u]
    p = x[n_u:n_u + n_p]
    lam = float(x[-1])
    stats["pressure_mean"] = float(system.m @ p)
    return Solution(u=u, p=p, multiplier=lam, residual=res, method=method,
                    stats=stats)
