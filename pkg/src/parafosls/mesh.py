"""Conforming triangulations of the unit square with uniform refinement.

Meshes are built from a fixed four-triangle macro triangulation of
Omega = (0,1)^2 (four corner vertices plus the center) and refined
uniformly by midpoint quadrisection: every triangle is split into four
sons by connecting its edge midpoints, which halves every element
diameter. Edges carry a global orientation (from the lower to the
higher vertex index) that downstream H(div) elements rely on.
"""

from dataclasses import dataclass

import numpy as np

BARYCENTRIC_TOL = 1e-12


class PointOutsideDomainError(ValueError):
    """Raised when a query point lies outside the meshed domain."""


@dataclass(frozen=True)
class Mesh:
    """Conforming triangular mesh.

    Attributes
    ----------
    vertices : (V, 2) float array
        Vertex coordinates.
    triangles : (T, 3) int array
        Vertex indices per triangle, counter-clockwise.
    edges : (E, 2) int array
        Vertex index pairs, stored (low, high).
    triangle_edges : (T, 3) int array
        Global edge index opposite each local vertex.
    triangle_edge_signs : (T, 3) int array
        +1 if the triangle's induced direction on that edge runs from
        the lower to the higher vertex index, else -1.
    boundary_vertex : (V,) bool array
    boundary_edge : (E,) bool array
    level : int
        Number of uniform refinements applied to the initial mesh.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    triangle_edges: np.ndarray
    triangle_edge_signs: np.ndarray
    boundary_vertex: np.ndarray
    boundary_edge: np.ndarray
    level: int

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    @property
    def num_edges(self):
        return self.edges.shape[0]

    def triangle_areas(self):
        """Signed areas of all triangles (positive for CCW ordering)."""
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def triangle_diameters(self):
        """Longest edge length of each triangle."""
        p = self.vertices[self.triangles]
        lengths = np.stack(
            [
                np.linalg.norm(p[:, 1] - p[:, 2], axis=1),
                np.linalg.norm(p[:, 2] - p[:, 0], axis=1),
                np.linalg.norm(p[:, 0] - p[:, 1], axis=1),
            ],
            axis=1,
        )
        return lengths.max(axis=1)

    def mesh_width(self):
        """Largest element diameter h."""
        return float(self.triangle_diameters().max())

    def edge_lengths(self):
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.linalg.norm(d, axis=1)


def _connect(vertices, triangles, level):
    """Derive edge connectivity and build a validated Mesh."""
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)

    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    if np.any(areas <= 0.0):
        bad = int(np.argmin(areas))
        raise ValueError(f"triangle {bad} is not counter-clockwise (area {areas[bad]})")

    # local edge i is opposite local vertex i
    tails = triangles[:, [1, 2, 0]]
    heads = triangles[:, [2, 0, 1]]
    lows = np.minimum(tails, heads)
    highs = np.maximum(tails, heads)
    pairs = np.stack([lows.ravel(), highs.ravel()], axis=1)
    edges, edge_of_pair = np.unique(pairs, axis=0, return_inverse=True)
    triangle_edges = edge_of_pair.reshape(-1, 3)
    signs = np.where(tails < heads, 1, -1).astype(np.int64)

    counts = np.bincount(triangle_edges.ravel(), minlength=edges.shape[0])
    if np.any(counts > 2) or np.any(counts < 1):
        raise ValueError("mesh is not conforming: edge shared by != 1 or 2 triangles")
    boundary_edge = counts == 1

    boundary_vertex = np.zeros(vertices.shape[0], dtype=bool)
    boundary_vertex[edges[boundary_edge].ravel()] = True

    n_v, n_e, n_t = vertices.shape[0], edges.shape[0], triangles.shape[0]
    if n_v - n_e + n_t != 1:
        raise ValueError(f"Euler relation violated: V-E+T = {n_v - n_e + n_t}")

    return Mesh(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        triangle_edges=triangle_edges,
        triangle_edge_signs=signs,
        boundary_vertex=boundary_vertex,
        boundary_edge=boundary_edge,
        level=level,
    )


def unit_square_initial_mesh():
    """Four-triangle triangulation of the unit square.

    Vertices 0..3 are the corners in counter-clockwise order starting
    at the origin; vertex 4 is the center (0.5, 0.5). Each triangle
    joins one side of the square to the center.
    """
    vertices = np.array(
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]]
    )
    triangles = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
    return _connect(vertices, triangles, level=0)


def refine_uniform(mesh):
    """Refine every triangle into four sons via its edge midpoints.

    Parent vertices keep their indices; the midpoint of edge ``e`` gets
    index ``V + e``. Son diameters are exactly half the parent's.
    """
    midpoints = 0.5 * (
        mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]]
    )
    vertices = np.vstack([mesh.vertices, midpoints])

    v = mesh.triangles
    m = mesh.num_vertices + mesh.triangle_edges  # midpoint index opposite vertex i
    sons = np.empty((4 * mesh.num_triangles, 3), dtype=np.int64)
    sons[0::4] = np.stack([v[:, 0], m[:, 2], m[:, 1]], axis=1)
    sons[1::4] = np.stack([v[:, 1], m[:, 0], m[:, 2]], axis=1)
    sons[2::4] = np.stack([v[:, 2], m[:, 1], m[:, 0]], axis=1)
    sons[3::4] = m
    return _connect(vertices, sons, level=mesh.level + 1)


def barycentric_coordinates(mesh, triangle, x):
    """Barycentric coordinates of point ``x`` in the given triangle."""
    p = mesh.vertices[mesh.triangles[triangle]]
    t = np.array(
        [
            [p[0, 0] - p[2, 0], p[1, 0] - p[2, 0]],
            [p[0, 1] - p[2, 1], p[1, 1] - p[2, 1]],
        ]
    )
    lam01 = np.linalg.solve(t, np.asarray(x, dtype=float) - p[2])
    return np.array([lam01[0], lam01[1], 1.0 - lam01[0] - lam01[1]])


def locate_point(mesh, x, tol=BARYCENTRIC_TOL):
    """Find a triangle containing ``x``.

    Returns
    -------
    (int, (3,) float array)
        Index of the first containing triangle and the barycentric
        coordinates of ``x`` in it.

    Raises
    ------
    PointOutsideDomainError
        If no triangle contains ``x`` within the tolerance.
    """
    x = np.asarray(x, dtype=float)
    p = mesh.vertices[mesh.triangles]  # (T, 3, 2)
    d1 = p[:, 0] - p[:, 2]
    d2 = p[:, 1] - p[:, 2]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    rx = x[0] - p[:, 2, 0]
    ry = x[1] - p[:, 2, 1]
    lam0 = (d2[:, 1] * rx - d2[:, 0] * ry) / det
    lam1 = (-d1[:, 1] * rx + d1[:, 0] * ry) / det
    lam2 = 1.0 - lam0 - lam1
    inside = (lam0 >= -tol) & (lam1 >= -tol) & (lam2 >= -tol)
    hits = np.flatnonzero(inside)
    if hits.size == 0:
        raise PointOutsideDomainError(f"point {tuple(x)} lies outside the mesh")
    t = int(hits[0])
    return t, np.array([lam0[t], lam1[t], lam2[t]])


def write_mesh_text(mesh, path):
    """Dump the mesh as plain text.

    Format: one header line with the vertex count, one ``x y`` line per
    vertex, then one ``i j k`` line (0-based vertex indices) per
    triangle.
    """
    with open(path, "w") as fh:
        fh.write(f"{mesh.num_vertices}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
