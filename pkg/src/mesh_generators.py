"""Procedural fixture meshes: tetrahedron, grids, tori and a genus-2 surface"""
from typing import List, Optional, Tuple

import numpy as np

from src.halfedge_mesh import Mesh


def tetrahedron(edge: float = 1.0) -> Mesh:
    """Regular tetrahedron with the given edge length, outward oriented"""
    corners = np.array([
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ])
    corners *= edge / (2.0 * np.sqrt(2.0))
    return Mesh(corners, [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])


def single_triangle(a: Tuple[float, float] = (0.0, 0.0),
                    b: Tuple[float, float] = (4.0, 0.0),
                    c: Tuple[float, float] = (0.0, 3.0)) -> Mesh:
    """One planar triangle; the default is the 3-4-5 right triangle"""
    positions = [[a[0], a[1], 0.0], [b[0], b[1], 0.0], [c[0], c[1], 0.0]]
    return Mesh(positions, [[0, 1, 2]])


def kite_quad(height: float = 0.2, width: float = 2.0) -> Mesh:
    """
    Two triangles sharing the long diagonal of a thin kite.

    For small heights the angles opposite the shared edge sum to more
    than pi, so the shared edge is not Delaunay.
    """
    positions = [
        [0.0, 0.0, 0.0],
        [width, 0.0, 0.0],
        [width / 2.0, height, 0.0],
        [width / 2.0, -height, 0.0],
    ]
    return Mesh(positions, [[0, 1, 2], [1, 0, 3]])


def _grid_faces(rows: int, cols: int, wrap_rows: bool = False, wrap_cols: bool = False) -> List[List[int]]:
    faces = []
    row_cells = rows if wrap_rows else rows - 1
    col_cells = cols if wrap_cols else cols - 1
    for i in range(row_cells):
        for j in range(col_cells):
            i1 = (i + 1) % rows
            j1 = (j + 1) % cols
            v00 = i * cols + j
            v01 = i * cols + j1
            v10 = i1 * cols + j
            v11 = i1 * cols + j1
            faces.append([v00, v01, v11])
            faces.append([v00, v11, v10])
    return faces


def grid_disk(n: int = 5, spacing: float = 1.0, jitter: float = 0.0,
              bump: float = 0.0, seed: Optional[int] = None) -> Mesh:
    """
    n x n vertex grid in the xy-plane, each cell split along the same diagonal.

    `jitter` moves interior vertices in-plane by up to jitter*spacing;
    `bump` lifts interior vertices by up to bump*spacing along z.
    """
    if n < 2:
        raise ValueError("grid_disk needs n >= 2")
    ys, xs = np.meshgrid(np.arange(n, dtype=float), np.arange(n, dtype=float), indexing='ij')
    positions = np.stack([xs.ravel() * spacing, ys.ravel() * spacing, np.zeros(n * n)], axis=1)

    if jitter or bump:
        rng = np.random.default_rng(seed)
        interior = (xs.ravel() > 0) & (xs.ravel() < n - 1) & (ys.ravel() > 0) & (ys.ravel() < n - 1)
        count = int(interior.sum())
        positions[interior, :2] += rng.uniform(-jitter, jitter, size=(count, 2)) * spacing
        positions[interior, 2] += rng.uniform(-bump, bump, size=count) * spacing

    return Mesh(positions, _grid_faces(n, n))


def torus(n_major: int = 20, n_minor: int = 20, major_radius: float = 3.0,
          minor_radius: float = 1.0) -> Mesh:
    """Torus of revolution about the z-axis, triangulated from a periodic grid"""
    if n_major < 3 or n_minor < 3:
        raise ValueError("torus needs at least 3 samples per direction")
    phi = 2.0 * np.pi * np.arange(n_major) / n_major
    psi = 2.0 * np.pi * np.arange(n_minor) / n_minor
    pp, ss = np.meshgrid(phi, psi, indexing='ij')
    ring = major_radius + minor_radius * np.cos(ss)
    positions = np.stack([
        (ring * np.cos(pp)).ravel(),
        (ring * np.sin(pp)).ravel(),
        (minor_radius * np.sin(ss)).ravel(),
    ], axis=1)
    return Mesh(positions, _grid_faces(n_major, n_minor, wrap_rows=True, wrap_cols=True))


def genus_two(n: int = 6, major_radius: float = 3.0, minor_radius: float = 1.0) -> Mesh:
    """
    Two tori joined through a square hole.

    The cell at grid position (0, 0) is removed from both tori; the second
    torus is mirrored across the plane tangent to the first one's outer
    equator and its faces are reversed, so the hole boundaries glue with
    opposite orientation.
    """
    first = torus(n, n, major_radius, minor_radius)
    hole = {0, 1, n, n + 1}
    faces_a = [f for f in first.faces.tolist() if not set(f) <= hole]

    mirror_x = 2.0 * (major_radius + minor_radius)
    positions_b = first.positions.copy()
    positions_b[:, 0] = mirror_x - positions_b[:, 0]

    # Second copy: hole vertices map onto the first torus, the rest are appended
    offset = len(first.positions)
    remap = {}
    extra = []
    for v in range(len(positions_b)):
        if v in hole:
            remap[v] = v
        else:
            remap[v] = offset + len(extra)
            extra.append(positions_b[v])
    faces_b = [[remap[a], remap[c], remap[b]] for a, b, c in first.faces.tolist()
               if not {a, b, c} <= hole]

    positions = np.vstack([first.positions, np.array(extra)])
    return Mesh(positions, faces_a + faces_b)
