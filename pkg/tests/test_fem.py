import numpy as np
import pytest
from scipy.sparse.linalg import splu

from surfctrl.fem import (NoBoundary, NodalFunction, assemble_mass,
                          assemble_stiffness, dirichlet_reduce,
                          expand_interior, interpolate, l2_error_vs_exact,
                          l2_norm, load_vector)
from surfctrl.geometry import laplace_beltrami_of, make_surface
from surfctrl.linsolve import cg_solve
from surfctrl.mesh import SurfaceMesh, triangle_areas

sphere = make_surface("sphere")
graph = make_surface("graph")


def _flat_right_triangle():
    verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    return SurfaceMesh(verts, np.array([[0, 1, 2]]), np.ones(3, dtype=bool))


def test_stiffness_of_unit_right_triangle():
    K = assemble_stiffness(_flat_right_triangle()).toarray()
    assert abs(K[0, 0] - 1.0) <= 1e-14
    assert np.abs(K - K.T).max() == 0.0
    assert np.abs(K.sum(axis=1)).max() <= 1e-14


def test_stiffness_annihilates_constants(sphere_setup):
    _, meshes = sphere_setup
    for mesh in meshes[:4]:
        K = assemble_stiffness(mesh)
        assert np.abs(K @ np.ones(mesh.n_vertices)).max() <= 1e-12
        assert np.abs(np.asarray(K.sum(axis=1)).ravel()).max() <= 1e-12


def test_mass_total_equals_area(sphere_setup):
    _, meshes = sphere_setup
    for mesh in meshes[:4]:
        M = assemble_mass(mesh)
        ones = np.ones(mesh.n_vertices)
        area = triangle_areas(mesh).sum()
        assert abs(ones @ (M @ ones) - area) <= 1e-12 * area


def test_mass_positive_definite(sphere_setup):
    _, meshes = sphere_setup
    M = assemble_mass(meshes[2]).tocsc()
    lu = splu(M)
    rng = np.random.default_rng(8)
    x = rng.standard_normal(M.shape[0])
    for _ in range(20):
        x = lu.solve(x)
        x = x / np.linalg.norm(x)
    # inverse power iteration converges to the smallest eigenvalue
    smallest = float(x @ (M @ x))
    assert smallest > 0.0
    assert float(x @ x) > 0.0


def test_load_vector_sums(sphere_setup):
    _, meshes = sphere_setup
    mesh = meshes[2]
    area = triangle_areas(mesh).sum()
    b1 = load_vector(mesh, sphere, lambda p: np.ones(len(np.atleast_2d(p))))
    assert abs(b1.sum() - area) <= 1e-12 * area
    # odd function on the symmetric mesh integrates to zero
    bx = load_vector(mesh, sphere, lambda p: np.atleast_2d(p)[:, 2])
    assert abs(bx.sum()) <= 1e-10


def test_load_vector_close_to_mass_times_interpolant(sphere_setup):
    _, meshes = sphere_setup
    f = lambda p: p[:, 2] ** 2
    for mesh in meshes[:5]:
        M = assemble_mass(mesh)
        gh = interpolate(mesh, f)
        d = load_vector(mesh, sphere, lambda p: np.atleast_2d(p)[:, 2] ** 2) \
            - M @ gh.values
        rel = np.linalg.norm(d) / np.linalg.norm(M @ gh.values)
        assert rel <= 0.3 * mesh.h ** 2


def test_interpolation_exact_for_constants(sphere_setup):
    _, meshes = sphere_setup
    mesh = meshes[2]
    v = interpolate(mesh, lambda p: np.full(len(p), 0.7))
    err = l2_error_vs_exact(mesh, sphere, v,
                            lambda p: np.full(len(np.atleast_2d(p)), 0.7))
    assert err <= 1e-12


def test_error_of_zero_against_one_is_sqrt_area(sphere_setup):
    _, meshes = sphere_setup
    mesh = meshes[2]
    zero = NodalFunction(mesh, np.zeros(mesh.n_vertices))
    err = l2_error_vs_exact(mesh, sphere, zero,
                            lambda p: np.ones(len(np.atleast_2d(p))))
    assert abs(err - np.sqrt(triangle_areas(mesh).sum())) <= 1e-12


def test_interpolation_rate(sphere_setup):
    _, meshes = sphere_setup
    errs = []
    for mesh in meshes[:6]:
        v = interpolate(mesh, lambda p: p[:, 2])
        errs.append(l2_error_vs_exact(mesh, sphere, v,
                                      lambda p: np.atleast_2d(p)[:, 2]))
    rates = [np.log2(errs[i] / errs[i + 1]) for i in range(5)]
    assert all(r >= 1.9 for r in rates[1:]), rates


def test_l2_norm_matches_mass_quadratic_form(sphere_setup):
    _, meshes = sphere_setup
    mesh = meshes[2]
    rng = np.random.default_rng(12)
    v = rng.standard_normal(mesh.n_vertices)
    M = assemble_mass(mesh)
    assert abs(l2_norm(mesh, v) - np.sqrt(v @ (M @ v))) <= 1e-12
    assert abs(l2_norm(mesh, v, M=M) - np.sqrt(v @ (M @ v))) <= 1e-15


def test_nodal_function_validates_length(sphere_setup):
    _, meshes = sphere_setup
    with pytest.raises(ValueError):
        NodalFunction(meshes[1], np.zeros(meshes[1].n_vertices - 1))


def test_dirichlet_reduce_and_expand(graph_setup):
    _, meshes = graph_setup
    mesh = meshes[2]
    K = assemble_stiffness(mesh)
    A, interior = dirichlet_reduce(K, mesh.boundary)
    assert A.shape[0] == (~mesh.boundary).sum()
    assert np.abs((A - A.T).data).max() <= 1e-14 if (A - A.T).nnz else True
    vals = np.arange(len(interior), dtype=float)
    full = expand_interior(vals, mesh.n_vertices, interior)
    assert np.array_equal(full[interior], vals)
    assert np.abs(full[mesh.boundary]).max() == 0.0


def test_dirichlet_reduce_requires_boundary(sphere_setup):
    _, meshes = sphere_setup
    mesh = meshes[1]
    K = assemble_stiffness(mesh)
    with pytest.raises(NoBoundary):
        dirichlet_reduce(K, np.zeros(mesh.n_vertices, dtype=bool))


def test_graph_poisson_rate(graph_setup):
    # manufactured Dirichlet Poisson problem with the registered
    # closed-form Laplacian of sin(pi x1) sin(pi x2)
    _, meshes = graph_setup
    exact = lambda p: (np.sin(np.pi * np.atleast_2d(p)[:, 0])
                       * np.sin(np.pi * np.atleast_2d(p)[:, 1]))
    errs, hs = [], []
    for mesh in meshes[1:5]:
        K = assemble_stiffness(mesh)
        b = load_vector(mesh, graph,
                        lambda p: -laplace_beltrami_of(
                            graph, "sin(pi*x1)*sin(pi*x2)", p))
        A, interior = dirichlet_reduce(K, mesh.boundary)
        yi, _ = cg_solve(A, b[interior], tol=1e-12, precond=A.diagonal())
        y = NodalFunction(mesh, expand_interior(yi, mesh.n_vertices, interior))
        errs.append(l2_error_vs_exact(mesh, graph, y, exact))
        hs.append(mesh.h)
    assert all(b < a for a, b in zip(errs, errs[1:]))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope >= 1.9, "Poisson slope %.4f, errors %s" % (slope, errs)


def test_galerkin_residual_small(sphere_setup):
    from surfctrl.linsolve import solve_state
    _, meshes = sphere_setup
    mesh = meshes[3]
    K = assemble_stiffness(mesh)
    M = assemble_mass(mesh)
    u = interpolate(mesh, lambda p: 3.0 * p[:, 2])
    y, _ = solve_state(mesh, K, M, u, c=1.0)
    res = (K + M) @ y.values - M @ u.values
    assert np.abs(res).max() <= 1e-8 * np.abs(M @ u.values).max()
