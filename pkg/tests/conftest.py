"""Shared helpers: mesh families and analytic polynomial oracles."""

import numpy as np
import pytest

from cdgbrinkman.mesh import (generate_polygonal, generate_uniform_rectangular,
                              generate_uniform_triangular)

MESH_FAMILIES = {
    "tri": generate_uniform_triangular,
    "rect": generate_uniform_rectangular,
    "poly": generate_polygonal,
}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_polynomial(degree, rng, scale=1.0):
    """A random 2D polynomial with analytic value and gradient closures.

    The gradient is differentiated term by term, independently of any
    weak-gradient machinery, so it can serve as an exactness oracle.
    """
    exps = [(d - i, i) for d in range(degree + 1) for i in range(d + 1)]
    coef = rng.uniform(-scale, scale, size=len(exps))

    def value(pts):
        pts = np.atleast_2d(pts)
        out = np.zeros(len(pts))
        for (p, q), c in zip(exps, coef):
            out += c * pts[:, 0] ** p * pts[:, 1] ** q
        return out

    def grad(pts):
        pts = np.atleast_2d(pts)
        gx = np.zeros(len(pts))
        gy = np.zeros(len(pts))
        for (p, q), c in zip(exps, coef):
            if p > 0:
                gx += c * p * pts[:, 0] ** (p - 1) * pts[:, 1] ** q
            if q > 0:
                gy += c * q * pts[:, 0] ** p * pts[:, 1] ** (q - 1)
        return np.column_stack([gx, gy])

    return value, grad


def project_scalar_field(disc, fn, block_name):
    """Per-cell L2 projection returning a list of coefficient vectors."""
    from cdgbrinkman.polyspace import gram_solve

    out = []
    for ctx in disc.contexts:
        blk = ctx.block(block_name)
        rhs = blk.vals @ (ctx.rule.weights * fn(ctx.rule.points))
        out.append(gram_solve(blk.chol, rhs))
    return out
