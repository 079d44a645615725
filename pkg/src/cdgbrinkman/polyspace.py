"""Scaled monomial bases on cells and quadrature on polygons and edges.

Basis functions for degree m are the centered, scaled monomials
((x-xc)/hT)^p ((y-yc)/hT)^q with p+q <= m in graded lexicographic order, so
the degree-m table is the leading block of any higher-degree table.  Cell
rules integrate polynomials exactly up to a requested degree by fanning the
polygon into triangles from the centroid and mapping tensor Gauss points
through the collapsed-square (Duffy) transform.
"""

from functools import lru_cache

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "MonomialBasis",
    "QuadratureRule",
    "ConditioningError",
    "dim_poly",
    "poly_exponents",
    "cell_quadrature",
    "edge_quadrature",
    "gram_matrix",
    "conditioning_report",
]


class ConditioningError(Exception):
    """A per-cell Gram matrix failed to factor as SPD."""


def dim_poly(m):
    """Dimension of P_m in 2D: (m+1)(m+2)/2."""
    return (m + 1) * (m + 2) // 2


@lru_cache(maxsize=64)
def poly_exponents(m):
    """Exponent pairs (p, q) of P_m in graded lex order, shape (dim, 2)."""
    exps = [(d - i, i) for d in range(m + 1) for i in range(d + 1)]
    return np.array(exps, dtype=np.int64)


class MonomialBasis:
    """Centered scaled monomials of total degree <= m on one cell.

    Parameters
    ----------
    degree : int
    center : (2,) array, the cell centroid
    scale : float, the cell diameter hT
    """

    def __init__(self, degree, center, scale):
        if degree < 0:
            raise ValueError("degree must be >= 0")
        self.degree = int(degree)
        self.center = np.asarray(center, dtype=float)
        self.scale = float(scale)
        self.dim = dim_poly(self.degree)
        self.exponents = poly_exponents(self.degree)

    def _local(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (pts - self.center) / self.scale

    def values(self, points):
        """Value table of shape (dim, npoints)."""
        loc = self._local(points)
        deg = self.degree
        # powers[k] = xi^k, eta^k for all points
        xp = np.vander(loc[:, 0], deg + 1, increasing=True).T
        yp = np.vander(loc[:, 1], deg + 1, increasing=True).T
        e = self.exponents
        return xp[e[:, 0]] * yp[e[:, 1]]

    def gradients(self, points):
        """Gradient tables (d/dx, d/dy), each of shape (dim, npoints).

        Includes the 1/hT chain-rule factor.
        """
        loc = self._local(points)
        deg = self.degree
        xp = np.vander(loc[:, 0], deg + 1, increasing=True).T
        yp = np.vander(loc[:, 1], deg + 1, increasing=True).T
        e = self.exponents
        npts = loc.shape[0]
        gx = np.zeros((self.dim, npts))
        gy = np.zeros((self.dim, npts))
        has_x = e[:, 0] > 0
        has_y = e[:, 1] > 0
        gx[has_x] = (e[has_x, 0, None] * xp[e[has_x, 0] - 1] * yp[e[has_x, 1]])
        gy[has_y] = (e[has_y, 1, None] * xp[e[has_y, 0]] * yp[e[has_y, 1] - 1])
        return gx / self.scale, gy / self.scale


class QuadratureRule:
    """Points (n, 2) or (n,) with weights summing to the region measure."""

    __slots__ = ("points", "weights")

    def __init__(self, points, weights):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)

    def integrate(self, values):
        """Weighted sum along the last axis of ``values``."""
        return np.asarray(values) @ self.weights


@lru_cache(maxsize=128)
def _gauss_1d(n):
    return np.polynomial.legendre.leggauss(n)


def _triangle_rule(v0, v1, v2, exactness):
    """Tensor Gauss rule on the triangle (v0,v1,v2), exact to ``exactness``.

    Uses the collapsed-square map x = a + xi*(b-a) + xi*eta*(c-b) whose
    Jacobian is linear in xi, so n_xi = ceil((d+2)/2), n_eta = ceil((d+1)/2)
    Gauss points integrate total degree d exactly.
    """
    d = max(int(exactness), 0)
    nxi = (d + 3) // 2
    neta = (d + 2) // 2
    x1, w1 = _gauss_1d(nxi)
    x2, w2 = _gauss_1d(neta)
    xi = 0.5 * (x1 + 1.0)
    eta = 0.5 * (x2 + 1.0)
    wxi = 0.5 * w1
    weta = 0.5 * w2
    XI, ETA = np.meshgrid(xi, eta, indexing="ij")
    WA = np.outer(wxi, weta)
    e1 = v1 - v0
    e2 = v2 - v1
    pts = (v0[None, :] + XI.ravel()[:, None] * e1[None, :]
           + (XI * ETA).ravel()[:, None] * e2[None, :])
    jac = abs(float(e1[0] * e2[1] - e1[1] * e2[0]))  # times xi below
    wts = WA.ravel() * XI.ravel() * jac
    return pts, wts


def cell_quadrature(vertices, exactness):
    """Quadrature on a simple CCW polygon, exact for degree <= exactness.

    The polygon is fanned into triangles from its area centroid; a degenerate
    sub-triangle (area < 1e-14 * hT^2) raises ValueError.
    """
    pts = np.asarray(vertices, dtype=float)
    n = len(pts)
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area2 = cross.sum()
    cx = ((x + xn) * cross).sum() / (3.0 * area2)
    cy = ((y + yn) * cross).sum() / (3.0 * area2)
    c = np.array([cx, cy])
    diam2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1).max()
    all_pts = []
    all_wts = []
    for i in range(n):
        v0, v1 = pts[i], pts[(i + 1) % n]
        a, b = v1 - v0, c - v0
        tri_area = 0.5 * abs(a[0] * b[1] - a[1] * b[0])
        if tri_area < 1e-14 * diam2:
            raise ValueError(
                f"degenerate fan triangle at polygon vertex {i} "
                f"(area {tri_area:g})")
        p, w = _triangle_rule(v0, v1, c, exactness)
        all_pts.append(p)
        all_wts.append(w)
    return QuadratureRule(np.vstack(all_pts), np.concatenate(all_wts))


def edge_quadrature(p0, p1, exactness):
    """Gauss rule with ceil((exactness+1)/2) points on the segment p0->p1.

    Weights sum to the segment length.
    """
    npts = max(1, (int(exactness) + 2) // 2)
    x, w = _gauss_1d(npts)
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    t = 0.5 * (x + 1.0)
    pts = p0[None, :] + t[:, None] * (p1 - p0)[None, :]
    length = float(np.hypot(*(p1 - p0)))
    return QuadratureRule(pts, 0.5 * w * length)


def gram_matrix(basis, rule):
    """Inner-product matrix of ``basis`` under ``rule`` (symmetric PD)."""
    vals = basis.values(rule.points)
    g = (vals * rule.weights) @ vals.T
    return 0.5 * (g + g.T)


def gram_cholesky(gram, where=""):
    """Cholesky factor of a Gram matrix; failure raises ConditioningError."""
    try:
        return cho_factor(gram, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(
            f"Gram matrix not SPD{' for ' + where if where else ''} "
            f"(size {gram.shape[0]})") from exc


def gram_solve(chol, rhs):
    """Solve G x = rhs given the factor from :func:`gram_cholesky`."""
    return cho_solve(chol, rhs)


def conditioning_report(mesh, degree, threshold=1e9):
    """Cells whose degree-``degree`` Gram matrix exceeds ``threshold``.

    Plain scaled monomials lose orthogonality quickly with degree; entries
    here signal that the orthonormalization flag (or a lower degree) is
    advisable.  Returns a list of (cell index, condition number), and logs
    a warning when it is nonempty.
    """
    import logging

    bad = []
    for cell in mesh.cells:
        basis = MonomialBasis(degree, cell.centroid, cell.diameter)
        rule = cell_quadrature(mesh.cell_vertices(cell.index), 2 * degree)
        cond = float(np.linalg.cond(gram_matrix(basis, rule)))
        if cond >= threshold:
            bad.append((cell.index, cond))
    if bad:
        worst = max(c for _, c in bad)
        logging.getLogger(__name__).warning(
            "degree-%d Gram matrices exceed condition %g on %d cells "
            "(worst %.3e); consider orthonormalization", degree, threshold,
            len(bad), worst)
    return bad
