"""Discrete weak gradients and the edge average/jump calculus.

Both weak-gradient operators reduce to one scalar primitive: for a piecewise
polynomial w of degree df, the lifted gradient on cell T is the pair
(g1, g2) in P_dt(T)^2 solving, for every test polynomial eta in P_dt(T),

    (g_i, eta)_T = -(w, d_i eta)_T + <w_avg, eta n_i>_dT,

where w_avg is the edge average: the two-sided mean on interior edges and,
on boundary edges, either zero (homogeneous velocity space), the cell's own
trace (pressure), or prescribed data (Dirichlet lifting).  The vector/tensor
operators apply this primitive to each component.

Per-cell target degrees: dt = k+1 on triangles and n+k-1 on n-gons for the
velocity operator; dt = k for the pressure operator.
"""

import numpy as np
import scipy.linalg as sla

from .polyspace import (MonomialBasis, cell_quadrature, edge_quadrature,
                        dim_poly, gram_cholesky, gram_solve)

__all__ = [
    "edge_average",
    "normal_jump",
    "scalar_jump",
    "target_degree",
    "CellContext",
    "ScalarWeakGradient",
    "Discretization",
    "build_scalar_weak_gradient",
]


# ---------------------------------------------------------------------------
# pointwise average / jump helpers (trace values at shared edge points)
# ---------------------------------------------------------------------------

def edge_average(minus_vals, plus_vals=None, boundary_value=None):
    """{v} at edge points: two-sided mean, or the boundary-edge trace.

    ``boundary_value`` replaces the trace on boundary edges (0.0 for the
    homogeneous velocity space, prescribed data for the lifting); None keeps
    the cell's own trace (pressure rule).
    """
    if plus_vals is not None:
        return 0.5 * (minus_vals + plus_vals)
    if boundary_value is None:
        return minus_vals
    return np.broadcast_to(boundary_value, np.shape(minus_vals)).astype(float)


def normal_jump(minus_vec, plus_vec, normal):
    """[v] = v_minus . n + v_plus . (-n) for vector traces (n out of minus).

    On boundary edges pass ``plus_vec=None``: [v] = v|_e . n.
    """
    j = minus_vec @ normal
    if plus_vec is not None:
        j = j - plus_vec @ normal
    return j


def scalar_jump(minus_vals, plus_vals, normal):
    """[[q]] = q_minus n + q_plus (-n), a vector per edge point."""
    d = minus_vals if plus_vals is None else minus_vals - plus_vals
    return d[:, None] * normal[None, :]


def target_degree(edge_count, k):
    """Weak-gradient degree on an n-gon: k+1 for triangles, n+k-1 otherwise."""
    return k + 1 if edge_count == 3 else edge_count + k - 1


# ---------------------------------------------------------------------------
# per-cell discretization context
# ---------------------------------------------------------------------------

class _DegreeBlock:
    """Tables, Gram matrix and factor for one polynomial degree on a cell.

    With orthonormalization the raw monomial tables are premultiplied by the
    inverse Cholesky factor of the raw Gram matrix, making G the identity.
    """

    __slots__ = ("dim", "vals", "gx", "gy", "gram", "chol", "_transform")

    def __init__(self, ctx, degree, orthonormalize):
        self.dim = dim_poly(degree)
        vals = ctx._raw_vals[: self.dim]
        gx = ctx._raw_gx[: self.dim]
        gy = ctx._raw_gy[: self.dim]
        gram = (vals * ctx.rule.weights) @ vals.T
        gram = 0.5 * (gram + gram.T)
        if orthonormalize:
            chol = gram_cholesky(gram, where=f"cell {ctx.index} degree {degree}")
            tr = sla.solve_triangular(chol[0], np.eye(self.dim), lower=True)
            self._transform = tr
            self.vals = tr @ vals
            self.gx = tr @ gx
            self.gy = tr @ gy
            self.gram = np.eye(self.dim)
            self.chol = gram_cholesky(self.gram)
        else:
            self._transform = None
            self.vals = vals
            self.gx = gx
            self.gy = gy
            self.gram = gram
            self.chol = gram_cholesky(gram, where=f"cell {ctx.index} degree {degree}")

    def trace(self, basis, points):
        """Basis values at arbitrary points (e.g. edge quadrature nodes)."""
        t = basis.values(points)[: self.dim]
        if self._transform is not None:
            t = self._transform @ t
        return t


class CellContext:
    """All per-cell data: bases, quadrature, Gram factors, edge traces."""

    def __init__(self, disc, index):
        mesh, k = disc.mesh, disc.k
        cell = mesh.cells[index]
        self.index = index
        self.cell = cell
        self.j = target_degree(cell.edge_count, k)
        self.basis = MonomialBasis(self.j, cell.centroid, cell.diameter)
        self.rule = cell_quadrature(mesh.cell_vertices(index),
                                    2 * self.j + disc.cell_exactness_bump)
        self._raw_vals = self.basis.values(self.rule.points)
        self._raw_gx, self._raw_gy = self.basis.gradients(self.rule.points)
        ortho = disc.orthonormalize
        self.block_j = _DegreeBlock(self, self.j, ortho)
        self.block_k = _DegreeBlock(self, k, ortho)
        self.block_p = _DegreeBlock(self, k - 1, ortho)
        # per-edge incidence in traversal order
        self.edge_ids = cell.edge_ids
        self.neighbors = []
        self.normals = []
        for eid in self.edge_ids:
            e = mesh.edges[eid]
            self.neighbors.append(mesh.neighbor(e, index))
            self.normals.append(mesh.outward_normal(e, index))

    def block(self, degree_name):
        return {"j": self.block_j, "k": self.block_k, "p": self.block_p}[degree_name]


# ---------------------------------------------------------------------------
# the scalar weak-gradient primitive
# ---------------------------------------------------------------------------

class ScalarWeakGradient:
    """Linear maps from neighborhood DOFs to weak-gradient coefficients.

    Attributes
    ----------
    cells : list of int
        Involved cells, the own cell first.
    col_of : dict cell -> slice into the stacked local DOF vector.
    Bx, By : (dim_t, ncols) right-hand-side maps; row a is the functional
        -(., dx eta_a)_T + <avg(.), eta_a n_x>_dT.
    Wx, Wy : coefficient maps, G^{-1} B.
    Zx, Zy : L^{-1} B, so that (grad_w u, grad_w v)_T = (Zx du) . (Zx dv) + y.
    """

    __slots__ = ("cells", "col_of", "ncols", "dim_t", "dim_f",
                 "Bx", "By", "Wx", "Wy", "Zx", "Zy")

    def __init__(self, disc, index, field, target, boundary):
        ctx = disc.contexts[index]
        tgt = ctx.block(target)
        fld = ctx.block(field)
        dim_t, dim_f = tgt.dim, fld.dim
        cells = [index]
        for nb in ctx.neighbors:
            if nb is not None and nb not in cells:
                cells.append(nb)
        col_of = {c: slice(i * dim_f, (i + 1) * dim_f)
                  for i, c in enumerate(cells)}
        ncols = dim_f * len(cells)
        Bx = np.zeros((dim_t, ncols))
        By = np.zeros((dim_t, ncols))
        # volume part: -(w, d_i eta)_T on the own block
        own = col_of[index]
        Bx[:, own] -= (tgt.gx * ctx.rule.weights) @ fld.vals.T
        By[:, own] -= (tgt.gy * ctx.rule.weights) @ fld.vals.T
        # edge part: <avg, eta n_i>_dT
        for eid, nb, n in zip(ctx.edge_ids, ctx.neighbors, ctx.normals):
            rule = disc.edge_rules[eid]
            w = rule.weights
            tt = tgt.trace(ctx.basis, rule.points)
            tf = fld.trace(ctx.basis, rule.points)
            if nb is not None:
                nctx = disc.contexts[nb]
                nf = nctx.block(field).trace(nctx.basis, rule.points)
                mx = 0.5 * (tt * w) @ tf.T
                nx = 0.5 * (tt * w) @ nf.T
                Bx[:, own] += n[0] * mx
                By[:, own] += n[1] * mx
                Bx[:, col_of[nb]] += n[0] * nx
                By[:, col_of[nb]] += n[1] * nx
            elif boundary == "natural":
                mx = (tt * w) @ tf.T
                Bx[:, own] += n[0] * mx
                By[:, own] += n[1] * mx
            # boundary == "zero": average vanishes, handled by the lifting
        self.cells = cells
        self.col_of = col_of
        self.ncols = ncols
        self.dim_t = dim_t
        self.dim_f = dim_f
        self.Bx, self.By = Bx, By
        self.Wx = gram_solve(tgt.chol, Bx)
        self.Wy = gram_solve(tgt.chol, By)
        L = tgt.chol[0]
        self.Zx = sla.solve_triangular(L, Bx, lower=True)
        self.Zy = sla.solve_triangular(L, By, lower=True)

    def coefficients(self, local_dofs):
        """Weak-gradient coefficient pair (cx, cy) for stacked local DOFs."""
        return self.Wx @ local_dofs, self.Wy @ local_dofs

    def gather(self, per_cell_dofs):
        """Stack DOF slices (callable cell -> vector) in involved-cell order."""
        return np.concatenate([per_cell_dofs(c) for c in self.cells])


def build_scalar_weak_gradient(disc, index, field_degree, target, boundary):
    """Scalar operator with an explicit field degree (test/diagnostic use).

    Degrees must match one of the cached per-cell blocks (j, k, or k-1);
    e.g. field k with target k realizes the pressure-style gradient of a
    degree-k field.
    """
    ctx = disc.contexts[index]
    degmap = {"j": ctx.j, "k": disc.k, "p": disc.k - 1}
    fkey = next((n for n, d in degmap.items() if d == field_degree), None)
    tkey = next((n for n, d in degmap.items() if d == target), None)
    if fkey is None or tkey is None:
        raise ValueError("degrees must be one of the cached blocks "
                         f"(j={ctx.j}, k={disc.k}, k-1={disc.k - 1})")
    return ScalarWeakGradient(disc, index, fkey, tkey, boundary)


# ---------------------------------------------------------------------------
# whole-mesh discretization cache
# ---------------------------------------------------------------------------

class Discretization:
    """Immutable per-(mesh, k) cache of cell contexts and weak gradients.

    Parameters
    ----------
    mesh : Mesh
    k : int
        Velocity degree (pressure degree is k-1), k >= 1.
    orthonormalize : bool
        Replace scaled monomials by their Gram-Cholesky orthonormalization.
    """

    def __init__(self, mesh, k, orthonormalize=False,
                 cell_exactness_bump=2, edge_exactness_bump=2):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.mesh = mesh
        self.k = int(k)
        self.orthonormalize = bool(orthonormalize)
        self.cell_exactness_bump = int(cell_exactness_bump)
        # shared edge rules: exactness covers both incident target degrees
        self.edge_rules = []
        cell_j = [target_degree(c.edge_count, k) for c in mesh.cells]
        for e in mesh.edges:
            jmax = cell_j[e.cell_minus]
            if e.cell_plus is not None:
                jmax = max(jmax, cell_j[e.cell_plus])
            ex = jmax + k + edge_exactness_bump
            self.edge_rules.append(
                edge_quadrature(mesh.vertices[e.v0], mesh.vertices[e.v1], ex))
        self.contexts = [CellContext(self, c) for c in range(mesh.n_cells)]
        self.vel_grad = [ScalarWeakGradient(self, c, "k", "j", "zero")
                         for c in range(mesh.n_cells)]
        self.pre_grad = [ScalarWeakGradient(self, c, "p", "k", "natural")
                         for c in range(mesh.n_cells)]

    # -- DOF layout: velocity blocks per cell (x-comp then y-comp), then
    #    pressure blocks per cell, then one multiplier row.

    @property
    def dim_k(self):
        return dim_poly(self.k)

    @property
    def dim_p(self):
        return dim_poly(self.k - 1)

    @property
    def n_velocity_dofs(self):
        return 2 * self.dim_k * self.mesh.n_cells

    @property
    def n_pressure_dofs(self):
        return self.dim_p * self.mesh.n_cells

    def velocity_slice(self, cell, comp):
        base = 2 * self.dim_k * cell + comp * self.dim_k
        return slice(base, base + self.dim_k)

    def pressure_slice(self, cell):
        base = self.dim_p * cell
        return slice(base, base + self.dim_p)

    def velocity_values(self, u, cell, points):
        """Evaluate the velocity field at points inside ``cell``: (n, 2)."""
        ctx = self.contexts[cell]
        t = ctx.block_k.trace(ctx.basis, points)
        ux = u[self.velocity_slice(cell, 0)] @ t
        uy = u[self.velocity_slice(cell, 1)] @ t
        return np.column_stack([ux, uy])

    def pressure_values(self, p, cell, points):
        ctx = self.contexts[cell]
        t = ctx.block_p.trace(ctx.basis, points)
        return p[self.pressure_slice(cell)] @ t

    def boundary_lifting_rhs(self, cell, g, comp):
        """<g_comp, eta n_i>_(dT on boundary) for the target basis: (rx, ry).

        This is the inhomogeneous part of the velocity weak gradient: the
        full operator applied to a field with Dirichlet trace g decomposes as
        the homogeneous operator plus G^{-1} of this vector.
        """
        ctx = self.contexts[cell]
        tgt = ctx.block_j
        rx = np.zeros(tgt.dim)
        ry = np.zeros(tgt.dim)
        for eid, nb, n in zip(ctx.edge_ids, ctx.neighbors, ctx.normals):
            if nb is not None:
                continue
            rule = self.edge_rules[eid]
            gv = np.asarray(g(rule.points))[:, comp]
            tt = tgt.trace(ctx.basis, rule.points)
            m = tt @ (rule.weights * gv)
            rx += n[0] * m
            ry += n[1] * m
        return rx, ry
