"""Legacy ASCII VTK output of a solved tree (unstructured grid of leaf cells)."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .quadtree import Quadtree

VTK_QUAD = 9


def _leaf_geometry(leaf, offset: int):
    s = leaf.grid.s
    x_lo, y_lo, x_hi, y_hi = leaf.bounds
    xs = np.linspace(x_lo, x_hi, s + 1)
    ys = np.linspace(y_lo, y_hi, s + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    idx = offset + np.arange((s + 1) ** 2).reshape(s + 1, s + 1)
    # counter-clockwise quads, cells ordered like u[ix, iy].ravel()
    quads = np.stack(
        [idx[:-1, :-1], idx[1:, :-1], idx[1:, 1:], idx[:-1, 1:]], axis=-1
    ).reshape(-1, 4)
    return pts, quads


def write_vtk(tree: Quadtree, path, problem=None) -> Path:
    """Write leaf cells with ``u``, ``level`` and, given a problem, ``u_exact``, ``error`` and ``f``.

    Points are shared within a leaf but duplicated along leaf edges.
    """
    leaves = list(tree.leaves())
    if any(leaf.payload is None or leaf.payload.u is None for leaf in leaves):
        raise ValueError("tree has no solution; run a solve first")
    points, cells = [], []
    fields: dict[str, list[np.ndarray]] = {"u": [], "level": []}
    if problem is not None:
        fields.update(u_exact=[], error=[], f=[])
    offset = 0
    for leaf in leaves:
        pts, quads = _leaf_geometry(leaf, offset)
        offset += len(pts)
        points.append(pts)
        cells.append(quads)
        u = leaf.payload.u.ravel()
        fields["u"].append(u)
        fields["level"].append(np.full(u.size, float(leaf.level)))
        if problem is not None:
            ue = leaf.grid.sample_centers(problem.u_exact).ravel()
            fields["u_exact"].append(ue)
            fields["error"].append(u - ue)
            fields["f"].append(leaf.grid.sample_centers(problem.f).ravel())
    P = np.concatenate(points)
    C = np.concatenate(cells)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\nquadhps solution\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(P)} double\n")
        np.savetxt(fh, P, fmt="%.17g")
        fh.write(f"CELLS {len(C)} {5 * len(C)}\n")
        np.savetxt(fh, np.column_stack([np.full(len(C), 4), C]), fmt="%d")
        fh.write(f"CELL_TYPES {len(C)}\n")
        np.savetxt(fh, np.full(len(C), VTK_QUAD), fmt="%d")
        fh.write(f"CELL_DATA {len(C)}\n")
        for name, chunks in fields.items():
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            np.savetxt(fh, np.concatenate(chunks), fmt="%.17g")
    return path
