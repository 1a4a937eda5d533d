"""Lowest-order discrete spaces: continuous P1 with zero trace and RT0.

The scalar variable lives in the space of continuous piecewise-linear
functions vanishing on the boundary (one DOF per interior vertex); the
flux variable lives in the lowest-order Raviart-Thomas space (one DOF
per edge, the constant normal component with respect to the global
edge orientation). Both spaces share one global index range: u-DOFs
first, then sigma-DOFs.
"""

from dataclasses import dataclass

import numpy as np

from .mesh import locate_point


@dataclass(frozen=True)
class DofMap:
    """Global DOF indexing for the product space P1_0 x RT0.

    u_dof_of_vertex : (V,) int array, -1 at boundary vertices
    sigma_dof_of_edge : (E,) int array, values in [n_u, n_u + n_sigma)
    """

    u_dof_of_vertex: np.ndarray
    sigma_dof_of_edge: np.ndarray
    n_u: int
    n_sigma: int

    @property
    def total(self):
        return self.n_u + self.n_sigma


@dataclass(frozen=True)
class LocalBasisEval:
    """All local shape functions of one triangle at one point.

    p1_values : (3,) barycentric coordinates
    p1_gradients : (3, 2) constant P1 gradients
    rt0_values : (3, 2) RT0 basis vectors (edge i opposite vertex i)
    rt0_divergences : (3,) constant RT0 divergences
    """

    p1_values: np.ndarray
    p1_gradients: np.ndarray
    rt0_values: np.ndarray
    rt0_divergences: np.ndarray


def build_dof_map(mesh):
    """Number interior-vertex u-DOFs, then one sigma-DOF per edge."""
    interior = ~mesh.boundary_vertex
    u_dof = np.full(mesh.num_vertices, -1, dtype=np.int64)
    u_dof[interior] = np.arange(interior.sum())
    n_u = int(interior.sum())
    sigma_dof = n_u + np.arange(mesh.num_edges, dtype=np.int64)
    return DofMap(
        u_dof_of_vertex=u_dof,
        sigma_dof_of_edge=sigma_dof,
        n_u=n_u,
        n_sigma=mesh.num_edges,
    )


def _perp(v):
    """Rotate by +90 degrees: (x, y) -> (-y, x)."""
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def element_geometry(mesh):
    """Vectorized per-element quantities used by assembly and integration.

    Returns
    -------
    verts : (T, 3, 2) vertex coordinates per triangle
    areas : (T,) positive triangle areas
    p1_grads : (T, 3, 2) constant P1 basis gradients
    rt_coef : (T, 3) RT0 factors s_i |e_i| / (2|T|)
    rt_divs : (T, 3) constant RT0 divergences s_i |e_i| / |T|
    """
    verts = mesh.vertices[mesh.triangles]
    d1 = verts[:, 1] - verts[:, 0]
    d2 = verts[:, 2] - verts[:, 0]
    areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    p1_grads = np.stack(
        [
            _perp(verts[:, 2] - verts[:, 1]),
            _perp(verts[:, 0] - verts[:, 2]),
            _perp(verts[:, 1] - verts[:, 0]),
        ],
        axis=1,
    ) / (2.0 * areas[:, None, None])
    edge_lens = np.stack(
        [
            np.linalg.norm(verts[:, 1] - verts[:, 2], axis=1),
            np.linalg.norm(verts[:, 2] - verts[:, 0], axis=1),
            np.linalg.norm(verts[:, 0] - verts[:, 1], axis=1),
        ],
        axis=1,
    )
    scale = mesh.triangle_edge_signs * edge_lens
    rt_coef = scale / (2.0 * areas[:, None])
    rt_divs = scale / areas[:, None]
    return verts, areas, p1_grads, rt_coef, rt_divs


def eval_local_basis(mesh, triangle, barycentric):
    """Evaluate P1 and RT0 shape functions on one triangle.

    The RT0 function attached to the edge opposite local vertex i is
    s_i |e_i| / (2|T|) (x - p_i) with divergence s_i |e_i| / |T|, where
    s_i is the global orientation sign. Its normal component is s_i on
    edge e_i and zero on the other two edges.
    """
    lam = np.asarray(barycentric, dtype=float)
    p = mesh.vertices[mesh.triangles[triangle]]
    d1 = p[1] - p[0]
    d2 = p[2] - p[0]
    area = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
    if area <= 0.0:
        raise ValueError(f"triangle {triangle} is degenerate (area {area})")

    grads = np.stack(
        [_perp(p[2] - p[1]), _perp(p[0] - p[2]), _perp(p[1] - p[0])]
    ) / (2.0 * area)

    x = lam @ p
    signs = mesh.triangle_edge_signs[triangle]
    edge_len = np.array(
        [
            np.linalg.norm(p[1] - p[2]),
            np.linalg.norm(p[2] - p[0]),
            np.linalg.norm(p[0] - p[1]),
        ]
    )
    scale = signs * edge_len
    rt_vals = scale[:, None] * (x[None, :] - p) / (2.0 * area)
    rt_divs = scale / area

    return LocalBasisEval(
        p1_values=lam,
        p1_gradients=grads,
        rt0_values=rt_vals,
        rt0_divergences=rt_divs,
    )


def eval_fields_on_triangle(u_coeffs, sigma_coeffs, mesh, dofmap, triangle, barycentric):
    """Discrete (u, grad u, sigma, div sigma) at a point of a given triangle.

    Boundary vertices contribute zero to u (homogeneous Dirichlet).
    """
    basis = eval_local_basis(mesh, triangle, barycentric)
    u_val = 0.0
    grad = np.zeros(2)
    for i, v in enumerate(mesh.triangles[triangle]):
        dof = dofmap.u_dof_of_vertex[v]
        if dof >= 0:
            u_val += u_coeffs[dof] * basis.p1_values[i]
            grad += u_coeffs[dof] * basis.p1_gradients[i]
    sigma = np.zeros(2)
    div = 0.0
    if sigma_coeffs is not None:
        for i, e in enumerate(mesh.triangle_edges[triangle]):
            sigma += sigma_coeffs[e] * basis.rt0_values[i]
            div += sigma_coeffs[e] * basis.rt0_divergences[i]
    return u_val, grad, sigma, div


def eval_discrete_function(state, mesh, dofmap, x):
    """Point evaluation of a discrete pair given by coefficient vectors.

    ``state`` needs attributes ``u_coeffs`` and ``sigma_coeffs`` (the
    latter may be None, in which case sigma and div sigma are zero).

    Returns (u, grad u, sigma, div sigma) at x; raises if x is outside
    the domain.
    """
    triangle, lam = locate_point(mesh, x)
    return eval_fields_on_triangle(
        state.u_coeffs, state.sigma_coeffs, mesh, dofmap, triangle, lam
    )
