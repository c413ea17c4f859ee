"""Piecewise linear finite elements on a triangulated surface.

Stiffness and mass matrices are assembled from exact element formulas.
Data terms (loads of analytic right-hand sides, errors against analytic
functions) use symmetric triangle quadrature, pulling integrand arguments
back to the smooth surface through the closest-point projection.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import DegenerateTriangle
from .mesh import triangle_areas


class NoBoundary(ValueError):
    """Dirichlet treatment requested on a mesh without boundary vertices."""


@dataclass
class NodalFunction:
    mesh: "SurfaceMesh"
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_vertices,):
            raise ValueError("coefficient count does not match the mesh")


# degree-4 symmetric rule, 6 points, weights normalized to sum to one
_W1 = 0.2233815896780115
_W2 = 0.1099517436553219
_A1 = 0.4459484909159649
_B1 = 0.1081030181680702
_A2 = 0.0915762135097707
_B2 = 0.8168475729804590
QUAD_DEG4 = (
    np.array([
        [_B1, _A1, _A1], [_A1, _B1, _A1], [_A1, _A1, _B1],
        [_B2, _A2, _A2], [_A2, _B2, _A2], [_A2, _A2, _B2],
    ]),
    np.array([_W1, _W1, _W1, _W2, _W2, _W2]),
)

# degree-2 rule (edge midpoints), exact for quadratics
QUAD_DEG2 = (
    np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
    np.array([1.0, 1.0, 1.0]) / 3.0,
)


def duffy_rule(n):
    """Tensor Gauss rule collapsed onto the triangle; exact to degree 2n - 2.

    Weights are normalized to sum to one, matching the other rules: the
    physical area multiplies the weighted sum.
    """
    t, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    xi, eta = np.meshgrid(t, t, indexing="ij")
    wx, wy = np.meshgrid(w, w, indexing="ij")
    x = xi.ravel()
    y = (eta * (1.0 - xi)).ravel()
    wt = 2.0 * (wx * wy * (1.0 - xi)).ravel()
    bary = np.stack([1.0 - x - y, x, y], axis=1)
    return bary, wt


QUAD_HIGH = duffy_rule(8)


def assemble_stiffness(mesh):
    """Surface P1 stiffness matrix, exact per-element formula."""
    tris = mesh.triangles
    p = mesh.vertices[tris]
    areas = triangle_areas(mesh)
    if areas.min() < 1e-14:
        raise DegenerateTriangle("triangle area below 1e-14 in assembly")
    # edge opposite vertex i; grad phi_i = (n x e_i) / (2A) in the triangle plane
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    dots = np.einsum("tim,tjm->tij", e, e)
    ke = dots / (4.0 * areas)[:, None, None]
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_mass(mesh):
    """Surface P1 mass matrix, exact per-element formula."""
    tris = mesh.triangles
    areas = triangle_areas(mesh)
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    me = areas[:, None, None] * base[None]
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.coo_matrix((me.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _quad_points(mesh, rule):
    bary, w = rule
    p = mesh.vertices[mesh.triangles]          # (t, 3, 3)
    pts = np.einsum("qj,tjm->tqm", bary, p)    # (t, q, 3)
    return pts, bary, w


def load_vector(mesh, surface, f, rule=QUAD_DEG4):
    """Load vector b[i] = integral of f(a(x)) phi_i(x) over the mesh.

    f takes points on the smooth surface, shape (n, 3) -> (n,).
    """
    pts, bary, w = _quad_points(mesh, rule)
    t, q, _ = pts.shape
    lifted = np.atleast_2d(surface.project(pts.reshape(-1, 3)))
    vals = f(lifted).reshape(t, q)
    areas = triangle_areas(mesh)
    contrib = np.einsum("q,tq,qj->tj", w, vals, bary) * areas[:, None]
    b = np.zeros(mesh.n_vertices)
    np.add.at(b, mesh.triangles.ravel(), contrib.ravel())
    return b


def interpolate(mesh, f):
    """Nodal interpolant; mesh vertices lie on the surface so no lift is needed."""
    return NodalFunction(mesh, f(mesh.vertices))


def l2_norm(mesh, v, M=None):
    vals = v.values if isinstance(v, NodalFunction) else np.asarray(v, dtype=float)
    if M is None:
        M = assemble_mass(mesh)
    return float(np.sqrt(max(vals @ (M @ vals), 0.0)))


def l2_error_vs_exact(mesh, surface, v, exact, rule=QUAD_DEG4):
    """L2 distance between a nodal function and an analytic function of Gamma."""
    vals = v.values if isinstance(v, NodalFunction) else np.asarray(v, dtype=float)
    pts, bary, w = _quad_points(mesh, rule)
    t, q, _ = pts.shape
    lifted = np.atleast_2d(surface.project(pts.reshape(-1, 3)))
    fe = exact(lifted).reshape(t, q)
    fv = np.einsum("qj,tj->tq", bary, vals[mesh.triangles])
    areas = triangle_areas(mesh)
    err2 = np.einsum("q,tq->t", w, (fv - fe) ** 2) * areas
    return float(np.sqrt(max(err2.sum(), 0.0)))


def dirichlet_reduce(matrix, boundary_mask):
    """Restrict a matrix to non-boundary rows and columns.

    Returns the reduced matrix and the stable interior index list used to
    scatter solutions back (boundary entries are zero).
    """
    boundary_mask = np.asarray(boundary_mask, dtype=bool)
    if not boundary_mask.any():
        raise NoBoundary("mesh has no boundary vertices")
    interior = np.flatnonzero(~boundary_mask)
    return matrix[interior][:, interior].tocsr(), interior


def expand_interior(values, n, interior):
    full = np.zeros(n)
    full[interior] = values
    return full
