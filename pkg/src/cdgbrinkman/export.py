"""Field output: legacy-VTK unstructured grids and uniform-lattice CSV."""

import json

import numpy as np

__all__ = [
    "write_vtk",
    "write_lattice_csv",
    "write_summary",
    "CellLocator",
    "cell_center_fields",
]


def cell_center_fields(disc, u, p):
    """Per-cell centroid values of p, u1, u2 as arrays of length n_cells."""
    n = disc.mesh.n_cells
    pc = np.empty(n)
    u1 = np.empty(n)
    u2 = np.empty(n)
    for c in range(n):
        pt = disc.mesh.cells[c].centroid[None, :]
        vel = disc.velocity_values(u, c, pt)
        u1[c], u2[c] = vel[0, 0], vel[0, 1]
        pc[c] = disc.pressure_values(p, c, pt)[0]
    return {"p": pc, "u1": u1, "u2": u2}


def write_vtk(path, mesh, cell_data):
    """Legacy ASCII VTK unstructured grid with per-cell scalar fields.

    Cells are written as VTK_POLYGON (type 7), which covers triangles,
    quads, and general polygons alike.
    """
    with open(path, "w", encoding="utf-8") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write("brinkman cdg fields\n")
        f.write("ASCII\n")
        f.write("DATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {mesh.n_vertices} double\n")
        for x, y in mesh.vertices:
            f.write(f"{x:.16g} {y:.16g} 0.0\n")
        sizes = [c.edge_count for c in mesh.cells]
        f.write(f"CELLS {mesh.n_cells} {mesh.n_cells + sum(sizes)}\n")
        for c in mesh.cells:
            f.write(str(c.edge_count) + " "
                    + " ".join(str(v) for v in c.vertex_ids) + "\n")
        f.write(f"CELL_TYPES {mesh.n_cells}\n")
        f.write("\n".join(["7"] * mesh.n_cells) + "\n")
        f.write(f"CELL_DATA {mesh.n_cells}\n")
        for name, values in cell_data.items():
            f.write(f"SCALARS {name} double 1\n")
            f.write("LOOKUP_TABLE default\n")
            for v in values:
                f.write(f"{v:.16g}\n")


class CellLocator:
    """Uniform-bucket point locator over a mesh (bbox prefilter + winding)."""

    def __init__(self, mesh, buckets_per_axis=None):
        self.mesh = mesh
        lo, hi = mesh.bbox
        self.lo = lo
        self.span = np.maximum(hi - lo, 1e-300)
        if buckets_per_axis is None:
            buckets_per_axis = max(1, int(np.sqrt(mesh.n_cells)))
        self.nb = buckets_per_axis
        self.buckets = [[] for _ in range(self.nb * self.nb)]
        for c in range(mesh.n_cells):
            pts = mesh.cell_vertices(c)
            i0, j0 = self._bucket_of(pts.min(axis=0))
            i1, j1 = self._bucket_of(pts.max(axis=0))
            for j in range(j0, j1 + 1):
                for i in range(i0, i1 + 1):
                    self.buckets[j * self.nb + i].append(c)

    def _bucket_of(self, point):
        rel = (np.asarray(point) - self.lo) / self.span
        idx = np.clip((rel * self.nb).astype(int), 0, self.nb - 1)
        return int(idx[0]), int(idx[1])

    def locate(self, point, tol=1e-12):
        """Index of a cell containing ``point`` (ties resolved to the first)."""
        i, j = self._bucket_of(point)
        for c in self.buckets[j * self.nb + i]:
            if _point_in_polygon(self.mesh.cell_vertices(c), point, tol):
                return c
        return None


def _point_in_polygon(pts, q, tol):
    # CCW polygon: inside iff every cross product is >= -tol (boundary counts)
    q = np.asarray(q, dtype=float)
    nxt = np.roll(pts, -1, axis=0)
    edge = nxt - pts
    rel = q[None, :] - pts
    cross = edge[:, 0] * rel[:, 1] - edge[:, 1] * rel[:, 0]
    scale = np.abs(edge).sum(axis=1)
    return bool(np.all(cross >= -tol * np.maximum(scale, 1.0)))


def write_lattice_csv(path, disc, u, p, resolution=128):
    """Sample u1, u2, p on a uniform lattice of cell-center points.

    Columns: x, y, u1, u2, p.  Points falling outside every cell (possible
    only for non-covering meshes) are skipped.
    """
    mesh = disc.mesh
    lo, hi = mesh.bbox
    loc = CellLocator(mesh)
    xs = lo[0] + (np.arange(resolution) + 0.5) / resolution * (hi[0] - lo[0])
    ys = lo[1] + (np.arange(resolution) + 0.5) / resolution * (hi[1] - lo[1])
    with open(path, "w", encoding="utf-8") as f:
        f.write("x,y,u1,u2,p\n")
        for y in ys:
            for x in xs:
                c = loc.locate((x, y))
                if c is None:
                    continue
                pt = np.array([[x, y]])
                vel = disc.velocity_values(u, c, pt)
                pv = disc.pressure_values(p, c, pt)
                f.write(f"{x:.10g},{y:.10g},{vel[0, 0]:.10e},"
                        f"{vel[0, 1]:.10e},{pv[0]:.10e}\n")


def write_summary(path, disc, solution, extra=None):
    """JSON run summary: sizes, residual, and field ranges."""
    fields = cell_center_fields(disc, solution.u, solution.p)
    data = {
        "n_cells": disc.mesh.n_cells,
        "dof_velocity": disc.n_velocity_dofs,
        "dof_pressure": disc.n_pressure_dofs,
        "residual": solution.residual,
        "multiplier": solution.multiplier,
        "pressure_mean": solution.stats.get("pressure_mean"),
        "ranges": {name: [float(v.min()), float(v.max())]
                   for name, v in fields.items()},
    }
    if extra:
        data.update(extra)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
