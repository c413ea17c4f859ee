"""Conjugate gradient solvers for the state, adjoint and Newton systems.

One CG core serves all solves.  It supports a diagonal preconditioner, a
custom inner product (the Newton system lives in a weighted L2 space), and
a projection hook that keeps iterates in a constrained subspace (used to
deflate the constant null space of pure Neumann problems and to stay in
the zero-mean subspace of the Newton system).
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .fem import NodalFunction, dirichlet_reduce, expand_interior


class SingularSystem(RuntimeError):
    """System matrix is singular in a direction CG cannot handle."""


class IncompatibleRHS(ValueError):
    """Right-hand side violates the compatibility condition of the bc."""


class MaxIterationsExceeded(RuntimeError):
    def __init__(self, msg, x, resid, iterations):
        super().__init__(msg)
        self.x = x
        self.resid = resid
        self.iterations = iterations


class NonSymmetricOperator(RuntimeError):
    """Operator failed the randomized symmetry check."""


@dataclass
class LinearOperatorHandle:
    apply: Callable[[np.ndarray], np.ndarray]
    dim: int
    symmetric: bool = True


def _as_apply(A):
    if isinstance(A, LinearOperatorHandle):
        return A.apply, A.dim
    if sp.issparse(A) or isinstance(A, np.ndarray):
        return (lambda x: A @ x), A.shape[0]
    raise TypeError("unsupported operator type %r" % type(A))


def check_symmetry(A, n=None, samples=10, rtol=1e-9, rng=None):
    """Randomized self-adjointness check; raises NonSymmetricOperator."""
    apply_A, dim = _as_apply(A) if not callable(A) else (A, n)
    if dim is None:
        raise ValueError("dimension required for a bare callable")
    rng = rng or np.random.default_rng(0)
    for _ in range(samples):
        x = rng.standard_normal(dim)
        y = rng.standard_normal(dim)
        lhs = y @ apply_A(x)
        rhs = x @ apply_A(y)
        scale = max(abs(lhs), abs(rhs), 1e-300)
        if abs(lhs - rhs) > rtol * scale:
            raise NonSymmetricOperator(
                "asymmetry %.3e exceeds %.1e" % (abs(lhs - rhs) / scale, rtol)
            )


def cg_solve(A, b, tol=1e-10, maxiter=None, precond=None, dot=None, project=None,
             x0=None, callback=None, check=False):
    """Preconditioned conjugate gradients.

    Parameters
    ----------
    A : sparse matrix, ndarray, or LinearOperatorHandle
    precond : None or (n,) array
        Diagonal (Jacobi) preconditioner entries.
    dot : None or callable(x, y)
        Inner product; Euclidean when None.
    project : None or callable(x)
        Applied to rhs, initial iterate, and every residual/direction update
        to keep the iteration in a subspace.
    check : bool
        Run the randomized symmetry check before solving.

    Returns (x, iterations).
    """
    apply_A, n = _as_apply(A)
    if check:
        check_symmetry(A if not callable(A) else apply_A, n)
    if maxiter is None:
        maxiter = max(20 * n, 200)
    if dot is None:
        dot = lambda u, v: float(u @ v)
    if precond is not None:
        dinv = 1.0 / np.asarray(precond, dtype=float)
        apply_M = lambda r: dinv * r
    else:
        apply_M = lambda r: r
    b = np.asarray(b, dtype=float)
    if project is not None:
        b = project(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if project is not None:
        x = project(x)
    r = b - apply_A(x)
    if project is not None:
        r = project(r)
    bnorm = np.sqrt(max(dot(b, b), 0.0))
    if bnorm == 0.0:
        return np.zeros(n), 0
    rnorm = np.sqrt(max(dot(r, r), 0.0))
    if rnorm <= tol * bnorm:
        return x, 0
    z = apply_M(r)
    if project is not None:
        z = project(z)
    p = z.copy()
    rz = dot(r, z)
    for k in range(1, maxiter + 1):
        Ap = apply_A(p)
        if project is not None:
            Ap = project(Ap)
        pAp = dot(p, Ap)
        if pAp <= 0.0:
            if np.sqrt(max(dot(r, r), 0.0)) <= tol * bnorm:
                return x, k - 1
            raise SingularSystem("non-positive curvature encountered in CG")
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        if callback is not None:
            callback(x)
        rnorm = np.sqrt(max(dot(r, r), 0.0))
        if rnorm <= tol * bnorm:
            # recurrence residual can drift; confirm with a true residual
            rtrue = b - apply_A(x)
            if project is not None:
                rtrue = project(rtrue)
            if np.sqrt(max(dot(rtrue, rtrue), 0.0)) <= tol * bnorm:
                return x, k
            r = rtrue
        z = apply_M(r)
        if project is not None:
            z = project(z)
        rz_new = dot(r, z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    raise MaxIterationsExceeded("CG did not reach tol %.1e" % tol, x, rnorm / bnorm, maxiter)


@dataclass
class StateSystem:
    """Prefactored ingredients for repeated solves of one bilinear form."""

    mesh: "SurfaceMesh"
    K: sp.csr_matrix
    M: sp.csr_matrix
    c: float
    bc: Optional[str]                      # None | "dirichlet" | "mean_zero"
    tol: float = 1e-10
    A: sp.csr_matrix = field(init=False)
    diag: np.ndarray = field(init=False)
    interior: Optional[np.ndarray] = field(init=False, default=None)
    M_ones: np.ndarray = field(init=False)
    area: float = field(init=False)

    def __post_init__(self):
        if self.bc == "mean_zero" and self.c != 0.0:
            raise ValueError("mean-zero solves require c = 0")
        ones = np.ones(self.mesh.n_vertices)
        self.M_ones = self.M @ ones
        self.area = float(ones @ self.M_ones)
        A = self.K + self.c * self.M if self.c != 0.0 else self.K
        if self.bc == "dirichlet":
            A, self.interior = dirichlet_reduce(A.tocsr(), self.mesh.boundary)
        self.A = A.tocsr()
        self.diag = self.A.diagonal()
        if np.any(self.diag <= 0.0):
            raise SingularSystem("non-positive diagonal in state matrix")

    def project_zero_mean(self, x):
        return x - (self.M_ones @ x) / self.area * np.ones(len(x))

    def solve(self, load):
        """Solve the weak state equation for a load vector; returns (y, cg_iters)."""
        load = np.asarray(load, dtype=float)
        if self.bc == "dirichlet":
            b = load[self.interior]
            y_int, it = cg_solve(self.A, b, tol=self.tol, precond=self.diag)
            return expand_interior(y_int, self.mesh.n_vertices, self.interior), it
        if self.bc == "mean_zero":
            # project the data onto zero mean, then deflate constants
            b = load - (load.sum() / self.area) * self.M_ones
            y, it = cg_solve(self.A, b, tol=self.tol, precond=self.diag,
                             project=self.project_zero_mean)
            return y, it
        return cg_solve(self.A, load, tol=self.tol, precond=self.diag)


def solve_state(mesh, K, M, u, c, bc=None, tol=1e-10):
    """Solve the state equation with control u given as a nodal function.

    Returns (NodalFunction, cg_iterations).  For bc="mean_zero" the data must
    already have (numerically) zero mean; raises IncompatibleRHS otherwise.
    """
    vals = u.values if isinstance(u, NodalFunction) else np.asarray(u, dtype=float)
    sys = StateSystem(mesh, K, M, float(c), bc, tol=tol)
    if bc == "mean_zero":
        mean = float(np.ones(len(vals)) @ (M @ vals))
        norm = float(np.sqrt(max(vals @ (M @ vals), 0.0)))
        if abs(mean) > 1e-8 * max(norm, 1e-300):
            raise IncompatibleRHS("control has nonzero mean %.3e" % mean)
    y, it = sys.solve(M @ vals)
    return NodalFunction(mesh, y), it
