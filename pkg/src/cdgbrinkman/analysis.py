"""Projections, discrete norms, the error-equation oracle, and rate reports.

Error functions are measured against the per-cell L2 projections of the
exact solution: e = (projected velocity) - (discrete velocity) and
eps = (projected pressure) - (discrete pressure).  The velocity energy norm
uses the homogeneous weak gradient, since both terms of e carry the same
boundary datum.
"""

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .assembly import assemble_system
from .polyspace import gram_solve
from .solver import solve

__all__ = [
    "project_velocity",
    "project_pressure",
    "project_tensor",
    "norm_triple_bar",
    "norm_l2_velocity",
    "norm_l2_pressure",
    "norm_pressure_jump",
    "norm_triple_bar_1",
    "velocity_error_l2",
    "pressure_error_l2",
    "error_equation_residual",
    "ErrorReport",
    "ConvergenceReport",
    "run_convergence",
    "CSV_COLUMNS",
]


# ---------------------------------------------------------------------------
# per-cell L2 projections
# ---------------------------------------------------------------------------

def project_velocity(disc, u_exact):
    """Projection onto the piecewise [P_k]^2 space, as a global DOF vector."""
    out = np.zeros(disc.n_velocity_dofs)
    for c in range(disc.mesh.n_cells):
        ctx = disc.contexts[c]
        w = ctx.rule.weights
        uv = np.asarray(u_exact(ctx.rule.points), dtype=float)
        for comp in (0, 1):
            rhs = ctx.block_k.vals @ (w * uv[:, comp])
            out[disc.velocity_slice(c, comp)] = gram_solve(ctx.block_k.chol, rhs)
    return out


def project_pressure(disc, p_exact):
    """Projection onto the piecewise P_{k-1} space."""
    out = np.zeros(disc.n_pressure_dofs)
    for c in range(disc.mesh.n_cells):
        ctx = disc.contexts[c]
        rhs = ctx.block_p.vals @ (ctx.rule.weights *
                                  np.asarray(p_exact(ctx.rule.points)))
        out[disc.pressure_slice(c)] = gram_solve(ctx.block_p.chol, rhs)
    return out


def project_tensor(disc, grad_exact):
    """Per-cell projection of a 2x2 tensor field onto the target space.

    Returns a list over cells of arrays (2, 2, dim_j): coefficients of each
    tensor entry in the cell's weak-gradient basis.
    """
    out = []
    for c in range(disc.mesh.n_cells):
        ctx = disc.contexts[c]
        w = ctx.rule.weights
        gv = np.asarray(grad_exact(ctx.rule.points), dtype=float)
        coeffs = np.empty((2, 2, ctx.block_j.dim))
        for r in (0, 1):
            for d in (0, 1):
                rhs = ctx.block_j.vals @ (w * gv[:, r, d])
                coeffs[r, d] = gram_solve(ctx.block_j.chol, rhs)
        out.append(coeffs)
    return out


# ---------------------------------------------------------------------------
# discrete norms
# ---------------------------------------------------------------------------

def norm_triple_bar(disc, problem, u):
    """Velocity energy norm: sqrt(mu ||grad_w v||^2 + mu ||kinv^{1/2} v||^2).

    Matches a(v, v) of the assembled A block to roundoff.
    """
    total = 0.0
    for c in range(disc.mesh.n_cells):
        ctx = disc.contexts[c]
        op = disc.vel_grad[c]
        kv, tensor = problem.kappa_inv_at(ctx.rule.points)
        w = ctx.rule.weights
        vals = disc.velocity_values(u, c, ctx.rule.points)
        if tensor:
            quad = np.einsum("qr,qrs,qs->q", vals, kv, vals)
        else:
            quad = kv * (vals ** 2).sum(axis=1)
        total += problem.mu * float(w @ quad)
        for comp in (0, 1):
            loc = op.gather(lambda cc: u[disc.velocity_slice(cc, comp)])
            total += problem.mu * (float((op.Zx @ loc) @ (op.Zx @ loc))
                                   + float((op.Zy @ loc) @ (op.Zy @ loc)))
    return math.sqrt(max(total, 0.0))


def norm_l2_velocity(disc, u):
    total = 0.0
    for c in range(disc.mesh.n_cells):
        ctx = disc.contexts[c]
        for comp in (0, 1):
            d = u[disc.velocity_slice(c, comp)]
            total += float(d @ ctx.block_k.gram @ d)
    return math.sqrt(max(total, 0.0))


def norm_l2_pressure(disc, p):
    total = 0.0
    for c in range(disc.mesh.n_cells):
        ctx = disc.contexts[c]
        d = p[disc.pressure_slice(c)]
        total += float(d @ ctx.block_p.gram @ d)
    return math.sqrt(max(total, 0.0))


def _pressure_jump_sq(disc, p, inverse_weight=False, edges="interior",
                      weight="global-h"):
    mesh = disc.mesh
    total = 0.0
    for e in mesh.edges:
        if e.is_boundary and edges != "all":
            continue
        h = mesh.h if weight == "global-h" else e.length
        fac = 1.0 / h if inverse_weight else h
        rule = disc.edge_rules[e.index]
        ctxm = disc.contexts[e.cell_minus]
        qm = p[disc.pressure_slice(e.cell_minus)] @ ctxm.block_p.trace(
            ctxm.basis, rule.points)
        if e.is_boundary:
            diff = qm
        else:
            ctxp = disc.contexts[e.cell_plus]
            qp = p[disc.pressure_slice(e.cell_plus)] @ ctxp.block_p.trace(
                ctxp.basis, rule.points)
            diff = qm - qp
        # ||[[q]]||^2 integrates |q_m n + q_p (-n)|^2 = (q_m - q_p)^2
        total += fac * float(rule.weights @ diff ** 2)
    return total


def norm_pressure_jump(disc, p, edges="interior", weight="global-h"):
    """||q||_h: sqrt(sum_e h ||[[q]]||_e^2), same edge set as the stabilizer."""
    return math.sqrt(max(_pressure_jump_sq(disc, p, False, edges, weight), 0.0))


def norm_triple_bar_1(disc, problem, p, edges="interior", weight="global-h"):
    """Pressure energy norm: sqrt(||kappa^{1/2} grad_w~ q||^2 + sum h^{-1}||[[q]]||^2).

    Scalar permeability only (the tensor square root is not needed by any
    runnable problem).
    """
    total = _pressure_jump_sq(disc, p, True, edges, weight)
    for c in range(disc.mesh.n_cells):
        ctx = disc.contexts[c]
        op = disc.pre_grad[c]
        loc = op.gather(lambda cc: p[disc.pressure_slice(cc)])
        gx = (op.Wx @ loc) @ ctx.block_k.vals
        gy = (op.Wy @ loc) @ ctx.block_k.vals
        kv, tensor = problem.kappa_inv_at(ctx.rule.points)
        if tensor:
            raise NotImplementedError(
                "triple-bar-1 norm supports scalar permeability only")
        total += float(ctx.rule.weights @ ((gx ** 2 + gy ** 2) / kv))
    return math.sqrt(max(total, 0.0))


def velocity_error_l2(disc, u, u_exact):
    """||u_exact - u_h|| by quadrature (not the projected error)."""
    total = 0.0
    for c in range(disc.mesh.n_cells):
        ctx = disc.contexts[c]
        vals = disc.velocity_values(u, c, ctx.rule.points)
        ex = np.asarray(u_exact(ctx.rule.points), dtype=float)
        total += float(ctx.rule.weights @ ((ex - vals) ** 2).sum(axis=1))
    return math.sqrt(max(total, 0.0))


def pressure_error_l2(disc, p, p_exact):
    total = 0.0
    for c in range(disc.mesh.n_cells):
        ctx = disc.contexts[c]
        vals = disc.pressure_values(p, c, ctx.rule.points)
        ex = np.asarray(p_exact(ctx.rule.points), dtype=float)
        total += float(ctx.rule.weights @ (ex - vals) ** 2)
    return math.sqrt(max(total, 0.0))


# ---------------------------------------------------------------------------
# error-equation oracle
# ---------------------------------------------------------------------------

def error_equation_residual(disc, problem, system, solution,
                            stabilizer_edges="interior", s_weight="global-h"):
    """Residuals of the two exact discrete error identities.

    For every velocity test DOF I and pressure test DOF alpha the identities

      (A e + B eps)_I          = (-mu L1 + mu L2 - mu L0 - L3 - L3x)_I
      (B^T e - S eps)_alpha    = (L4 - S (projected p))_alpha

    hold to quadrature/solver precision, where e and eps are the projected
    errors and the L-terms measure the projection defects of the exact
    solution.  L0 (the permeability projection defect) and L3x (the pressure
    jump/average cross term) vanish for piecewise-constant permeability and
    continuous projected pressure respectively; both are kept so the
    identity is exact for every runnable problem.  Returns a dict with the
    per-equation max residuals and the scale max(1, |F|_inf).
    """
    mesh = disc.mesh
    mu = problem.mu
    uQ = project_velocity(disc, problem.u)
    pQ = project_pressure(disc, problem.p)
    gQ = project_tensor(disc, problem.grad_u)
    e = uQ - solution.u
    eps = pQ - solution.p

    lhs1 = system.A @ e + system.B @ eps
    lhs2 = system.B.T @ e - system.S @ eps

    rhs1 = np.zeros(disc.n_velocity_dofs)
    rhs2 = np.zeros(disc.n_pressure_dofs)

    # cell loop: L1 (weak-gradient defect) and L0 (permeability defect)
    for c in range(mesh.n_cells):
        ctx = disc.contexts[c]
        op = disc.vel_grad[c]
        w = ctx.rule.weights
        kv, tensor = problem.kappa_inv_at(ctx.rule.points)
        uv = np.asarray(problem.u(ctx.rule.points), dtype=float)
        uhv = np.column_stack([
            uQ[disc.velocity_slice(c, 0)] @ ctx.block_k.vals,
            uQ[disc.velocity_slice(c, 1)] @ ctx.block_k.vals,
        ])
        du = uv - uhv
        if tensor:
            kdu = np.einsum("qrs,qs->qr", kv, du)
        else:
            kdu = kv[:, None] * du
        has_boundary = any(nb is None for nb in ctx.neighbors)
        for comp in (0, 1):
            # L0: (kinv (u - Q_h u), phi)_T
            rhs1[disc.velocity_slice(c, comp)] -= mu * (
                ctx.block_k.vals @ (w * kdu[:, comp]))
            # L1: (grad_w u - grad_w Q_h u, grad_w phi)_T with
            # grad_w u realized as the projected exact gradient
            loc = op.gather(lambda cc: uQ[disc.velocity_slice(cc, comp)])
            tx = gQ[c][comp, 0] - op.Wx @ loc
            ty = gQ[c][comp, 1] - op.Wy @ loc
            if has_boundary:
                rx, ry = disc.boundary_lifting_rhs(c, problem.g, comp)
                tx -= gram_solve(ctx.block_j.chol, rx)
                ty -= gram_solve(ctx.block_j.chol, ry)
            contrib = tx @ op.Bx + ty @ op.By
            rhs1[_vel_idx(disc, op, comp)] -= mu * contrib

    # edge loop: L2, L3, L3x into rhs1; L4 into rhs2
    for eidx, edge in enumerate(mesh.edges):
        rule = disc.edge_rules[eidx]
        w = rule.weights
        pts = rule.points
        cm = edge.cell_minus
        cp = edge.cell_plus
        n = edge.normal
        ctxm = disc.contexts[cm]
        gv = np.asarray(problem.grad_u(pts), dtype=float)
        uv = np.asarray(problem.u(pts), dtype=float)
        pv = np.asarray(problem.p(pts), dtype=float)
        trm_k = ctxm.block_k.trace(ctxm.basis, pts)
        trm_p = ctxm.block_p.trace(ctxm.basis, pts)
        trm_j = ctxm.block_j.trace(ctxm.basis, pts)
        # projected traces from the minus side
        gqm = np.stack([[gQ[cm][r, d] @ trm_j for d in (0, 1)]
                        for r in (0, 1)])          # (2, 2, nq)
        uqm = np.stack([uQ[disc.velocity_slice(cm, comp)] @ trm_k
                        for comp in (0, 1)])        # (2, nq)
        pqm = pQ[disc.pressure_slice(cm)] @ trm_p   # (nq,)
        if cp is None:
            # boundary edge: v - {v} = v (homogeneous average), q - {q} = 0
            for comp in (0, 1):
                defect = (gv[:, comp, 0] - gqm[comp, 0]) * n[0] + \
                         (gv[:, comp, 1] - gqm[comp, 1]) * n[1]
                l2 = trm_k @ (w * defect)
                l3 = trm_k @ (w * (pv - pqm)) * n[comp]
                sl = disc.velocity_slice(cm, comp)
                rhs1[sl] += mu * l2
                rhs1[sl] -= l3
            continue
        ctxp = disc.contexts[cp]
        trp_k = ctxp.block_k.trace(ctxp.basis, pts)
        trp_p = ctxp.block_p.trace(ctxp.basis, pts)
        trp_j = ctxp.block_j.trace(ctxp.basis, pts)
        gqp = np.stack([[gQ[cp][r, d] @ trp_j for d in (0, 1)]
                        for r in (0, 1)])
        uqp = np.stack([uQ[disc.velocity_slice(cp, comp)] @ trp_k
                        for comp in (0, 1)])
        pqp = pQ[disc.pressure_slice(cp)] @ trp_p
        jump_pq = pqm - pqp                         # [[Q p]] = jump * n
        for comp in (0, 1):
            # L2 from each side: <(grad u - Q grad u) . n_side, v - {v}>
            dm = (gv[:, comp, 0] - gqm[comp, 0]) * n[0] + \
                 (gv[:, comp, 1] - gqm[comp, 1]) * n[1]
            dp = (gv[:, comp, 0] - gqp[comp, 0]) * (-n[0]) + \
                 (gv[:, comp, 1] - gqp[comp, 1]) * (-n[1])
            # v - {v} = (v_own - v_other)/2: own +1/2, other -1/2
            rhs1[disc.velocity_slice(cm, comp)] += mu * 0.5 * (trm_k @ (w * dm))
            rhs1[disc.velocity_slice(cp, comp)] -= mu * 0.5 * (trp_k @ (w * dm))
            rhs1[disc.velocity_slice(cp, comp)] += mu * 0.5 * (trp_k @ (w * dp))
            rhs1[disc.velocity_slice(cm, comp)] -= mu * 0.5 * (trm_k @ (w * dp))
            # L3 from each side: <p - Q p, v . n_side>
            rhs1[disc.velocity_slice(cm, comp)] -= n[comp] * (
                trm_k @ (w * (pv - pqm)))
            rhs1[disc.velocity_slice(cp, comp)] -= -n[comp] * (
                trp_k @ (w * (pv - pqp)))
            # L3x: <[[Q p]], {v}> on interior edges
            rhs1[disc.velocity_slice(cm, comp)] -= 0.5 * n[comp] * (
                trm_k @ (w * jump_pq))
            rhs1[disc.velocity_slice(cp, comp)] -= 0.5 * n[comp] * (
                trp_k @ (w * jump_pq))
        # L4: <(u - Q u) . n_side, q - {q}>; q - {q} = (q_own - q_other)/2
        dm = (uv[:, 0] - uqm[0]) * n[0] + (uv[:, 1] - uqm[1]) * n[1]
        dp = (uv[:, 0] - uqp[0]) * (-n[0]) + (uv[:, 1] - uqp[1]) * (-n[1])
        rhs2[disc.pressure_slice(cm)] += 0.5 * (trm_p @ (w * dm))
        rhs2[disc.pressure_slice(cp)] -= 0.5 * (trp_p @ (w * dm))
        rhs2[disc.pressure_slice(cp)] += 0.5 * (trp_p @ (w * dp))
        rhs2[disc.pressure_slice(cm)] -= 0.5 * (trm_p @ (w * dp))

    rhs2 -= system.S @ pQ

    scale = max(1.0, float(np.abs(system.F).max()))
    return {
        "res_momentum": float(np.abs(lhs1 - rhs1).max()),
        "res_mass": float(np.abs(lhs2 - rhs2).max()),
        "scale": scale,
    }


def _vel_idx(disc, op, comp):
    return np.concatenate(
        [np.arange(disc.velocity_slice(c, comp).start,
                   disc.velocity_slice(c, comp).stop) for c in op.cells])


# ---------------------------------------------------------------------------
# convergence reporting
# ---------------------------------------------------------------------------

CSV_COLUMNS = ["h", "dof_u", "dof_p", "trb_e", "ord_trb", "l2_e", "ord_l2",
               "l2_eps", "ord_eps", "h_eps", "ord_h_eps", "seconds"]


@dataclass
class ErrorReport:
    """Error norms of one solve at labeled mesh size h."""

    h: float
    trb_e: float
    l2_e: float
    l2_eps: float
    h_eps: float
    trb1_eps: float
    dof_u: int
    dof_p: int
    seconds: float


@dataclass
class ConvergenceReport:
    """Per-level error reports plus log2 rates between consecutive levels."""

    reports: List[ErrorReport] = field(default_factory=list)

    RATE_COLUMNS = ("trb_e", "l2_e", "l2_eps", "h_eps", "trb1_eps")

    def rates(self):
        """Dict column -> list of log2(err(h)/err(h/2)), None on level 0."""
        out = {c: [None] for c in self.RATE_COLUMNS}
        for prev, cur in zip(self.reports, self.reports[1:]):
            ratio = math.log2(prev.h / cur.h)
            for c in self.RATE_COLUMNS:
                a, b = getattr(prev, c), getattr(cur, c)
                if a > 0 and b > 0:
                    out[c].append(math.log2(a / b) / ratio)
                else:
                    out[c].append(None)
        return out

    def final_rate(self, column):
        r = self.rates()[column]
        return r[-1] if r and r[-1] is not None else float("nan")

    def to_csv(self, path_or_buf):
        rates = self.rates()

        def fmt(v):
            return "" if v is None else f"{v:.4f}"

        close = False
        if isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__"):
            fh = open(path_or_buf, "w", newline="", encoding="utf-8")
            close = True
        else:
            fh = path_or_buf
        try:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for i, r in enumerate(self.reports):
                writer.writerow([
                    f"{r.h:.10g}", r.dof_u, r.dof_p,
                    f"{r.trb_e:.6e}", fmt(rates["trb_e"][i]),
                    f"{r.l2_e:.6e}", fmt(rates["l2_e"][i]),
                    f"{r.l2_eps:.6e}", fmt(rates["l2_eps"][i]),
                    f"{r.h_eps:.6e}", fmt(rates["h_eps"][i]),
                    f"{r.seconds:.3f}",
                ])
        finally:
            if close:
                fh.close()

    def table(self):
        """Plain-text table in the error/order column layout."""
        rates = self.rates()
        buf = io.StringIO()
        head = (f"{'h':>8} {'|||e|||':>12} {'order':>7} {'||e||':>12} "
                f"{'order':>7} {'||eps||':>12} {'order':>7}")
        buf.write(head + "\n")
        for i, r in enumerate(self.reports):
            def o(col):
                v = rates[col][i]
                return "     --" if v is None else f"{v:7.4f}"

            buf.write(
                f"{_as_fraction(r.h):>8} {r.trb_e:12.4e} {o('trb_e')} "
                f"{r.l2_e:12.4e} {o('l2_e')} {r.l2_eps:12.4e} {o('l2_eps')}\n")
        return buf.getvalue()


def _as_fraction(h):
    inv = 1.0 / h
    if abs(inv - round(inv)) < 1e-9:
        return f"1/{round(inv)}"
    return f"{h:.4g}"


def run_convergence(problem, mesh_factory, k, n_divs, solver="direct",
                    orthonormalize=False, stabilizer_edges="interior",
                    s_weight="global-h", on_level=None):
    """Solve a manufactured problem across refinement levels.

    ``mesh_factory`` maps n_div to a Mesh; n_divs should double so the
    labeled h halves.  Returns a ConvergenceReport; ``on_level`` (if given)
    receives each ErrorReport as it completes.
    """
    from .weakgrad import Discretization

    report = ConvergenceReport()
    for n in n_divs:
        t0 = time.perf_counter()
        mesh = mesh_factory(n)
        disc = Discretization(mesh, k, orthonormalize=orthonormalize)
        system = assemble_system(disc, problem,
                                 stabilizer_edges=stabilizer_edges,
                                 s_weight=s_weight)
        sol = solve(system, method=solver, disc=disc)
        uQ = project_velocity(disc, problem.u)
        pQ = project_pressure(disc, problem.p)
        e = uQ - sol.u
        eps = pQ - sol.p
        rep = ErrorReport(
            h=mesh.labeled_h,
            trb_e=norm_triple_bar(disc, problem, e),
            l2_e=norm_l2_velocity(disc, e),
            l2_eps=norm_l2_pressure(disc, eps),
            h_eps=norm_pressure_jump(disc, eps, edges=stabilizer_edges,
                                     weight=s_weight),
            trb1_eps=norm_triple_bar_1(disc, problem, eps,
                                       edges=stabilizer_edges,
                                       weight=s_weight),
            dof_u=disc.n_velocity_dofs,
            dof_p=disc.n_pressure_dofs,
            seconds=time.perf_counter() - t0,
        )
        report.reports.append(rep)
        if on_level is not None:
            on_level(rep)
    return report
