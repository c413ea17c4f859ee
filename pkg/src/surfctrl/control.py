"""Control-constrained optimal control on a triangulated surface.

The control is never re-interpolated into the finite element space.  It is
stored as a clamp of a P1 gate function: constant at a bound wherever the
gate leaves the admissible interval, and equal to a P1 function on the
inactive region.  All integrals of such functions (loads, masses, norms)
are computed exactly by clipping triangles along the gate level lines.

The optimality system u = P(-p_h(u)/alpha + m) is solved by a semi-smooth
Newton method posed in the gate variable v = -p_h/alpha.  Each step
freezes the active set of the current gate, solves the linearization
(I + (chi/alpha) S*S chi) dv = vhat - v by CG in the L2 inner product of
the inactive region, and extends the increment to the active region
through the equation itself at the cost of one extra operator
application.  Every iterate is the plain projection of its gate, hence
admissible.  For problems posed over zero-mean controls the projection
carries an additive shift m re-solved exactly from a scalar equation
after each step; differentiating through that shift adds a rank-one
correction to the CG operator and keeps the iteration in the zero-mean
subspace of the inactive region.
"""

import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .clipping import clamp_integral, fan_quadrature, partition_unit_triangle
from .fem import (NodalFunction, QUAD_DEG2, assemble_mass,
                  assemble_stiffness, duffy_rule, load_vector)
from .linsolve import LinearOperatorHandle, StateSystem, cg_solve
from .mesh import triangle_areas


class NoValidM(RuntimeError):
    """The zero-mean shift equation has no isolated root."""


class EmptyInactiveSet(RuntimeError):
    """All of the surface is active; the Newton system is trivial."""


class NoConvergence(RuntimeError):
    def __init__(self, msg, residuals):
        super().__init__(msg)
        self.residuals = residuals


@dataclass
class ProblemSpec:
    surface: object
    c: float
    alpha: float
    bounds: tuple
    mean_zero: bool = False
    dirichlet: bool = False
    z: Optional[Callable] = None
    r: Optional[Callable] = None
    u_exact: Optional[Callable] = None
    control_profile: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        a, b = self.bounds
        if not a < b:
            raise ValueError("bounds must satisfy a < b")
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if self.mean_zero and self.dirichlet:
            raise ValueError("mean-zero and Dirichlet settings are exclusive")
        if self.mean_zero and not (a < 0.0 < b):
            raise ValueError("mean-zero problems need a < 0 < b")
        if self.c == 0.0 and not (self.mean_zero or self.dirichlet):
            raise ValueError("c = 0 needs Dirichlet or mean-zero closure")

    @property
    def bc(self):
        if self.dirichlet:
            return "dirichlet"
        if self.mean_zero:
            return "mean_zero"
        return None


@dataclass
class ClampedControl:
    """clamp(base + m, a, b): the variationally discretized control.

    `base` is the P1 gate function (-p_h/alpha at Newton iterates and at
    the solution) and m the zero-mean shift.  The represented function is
    not P1: it is constant at a bound wherever base + m leaves [a, b].
    The optional `inner` field substitutes a different P1 function on the
    inactive region, which lets the same machinery integrate functions
    that jump across the clamp lines; by default it is base + m and the
    control is the pure projection.
    """

    mesh: object
    base: np.ndarray
    m: float
    bounds: tuple
    inner: Optional[np.ndarray] = None

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float)
        if self.base.shape != (self.mesh.n_vertices,):
            raise ValueError("gate length does not match the mesh")
        if self.inner is None:
            self.inner = self.base + self.m
        else:
            self.inner = np.asarray(self.inner, dtype=float)

    @property
    def is_projection(self):
        return np.array_equal(self.inner, self.base + self.m)

    def vertex_values(self):
        a, b = self.bounds
        g = self.base + self.m
        return np.where(g < a, a, np.where(g > b, b, self.inner))


def values_at(mesh, u, bary):
    """Control values at reference points of every triangle, shape (t, q)."""
    a, b = u.bounds
    tris = mesh.triangles
    g = np.einsum("qj,tj->tq", bary, (u.base + u.m)[tris])
    w = np.einsum("qj,tj->tq", bary, u.inner[tris])
    return np.where(g < a, a, np.where(g > b, b, w))


def compute_m(mesh, v, bounds, tol_scale=1e-11, max_eval=300):
    """Shift m with integral of clamp(v + m, a, b) equal to zero.

    Bisection on the sign-change bracket, with secant refinement; the clamp
    integral is evaluated exactly from the per-triangle closed form.
    """
    vals = v.values if isinstance(v, NodalFunction) else np.asarray(v, dtype=float)
    a, b = bounds
    if not a < 0.0 < b:
        raise NoValidM("zero mean unreachable unless a < 0 < b")
    v_sorted = np.sort(vals[mesh.triangles], axis=1)
    areas = triangle_areas(mesh)
    total_area = areas.sum()
    tol = tol_scale * total_area
    f = lambda x: clamp_integral(v_sorted, areas, a, b, shift=x)
    lo, hi = a - vals.max(), b - vals.min()
    flo, fhi = a * total_area, b * total_area
    x = 0.5 * (lo + hi)
    for k in range(max_eval):
        fx = f(x)
        if abs(fx) <= tol:
            break
        if fx > 0.0:
            hi, fhi = x, fx
        else:
            lo, flo = x, fx
        if k % 3 == 2:
            x = 0.5 * (lo + hi)     # guaranteed bracket shrink
        else:
            x = hi - fhi * (hi - lo) / (fhi - flo)
            if not lo < x < hi:
                x = 0.5 * (lo + hi)
    else:
        raise NoValidM("shift equation not solved to %.1e" % tol)
    # reject the degenerate flat case: no inactive measure at the root.
    # the difference must clear the roundoff floor of the closed-form
    # integral, or a ~1e-16 wobble divided by delta fakes a measure.
    delta = 1e-7 * (b - a)
    df = f(x + delta) - f(x - delta)
    noise = 64.0 * np.finfo(float).eps * max(abs(a), b) * total_area
    if df <= max(2.0 * delta * 1e-12 * total_area, noise):
        raise NoValidM("inactive set has zero measure at the root")
    return float(x)


# ---------------------------------------------------------------------------
# masked assembly: exact integrals split along the gate level lines
# ---------------------------------------------------------------------------

@dataclass
class MaskedAssembly:
    M_chi: sp.csr_matrix          # mass restricted to the inactive region
    f_low: np.ndarray             # loads of the lower active indicator
    f_high: np.ndarray
    inactive_area: float
    area_low: float
    area_high: float
    cut: np.ndarray               # indices of triangles cut by a level line


def _classify(g_tri, a, b):
    gmin = g_tri.min(axis=1)
    gmax = g_tri.max(axis=1)
    full_low = gmax <= a
    full_high = (gmin >= b) & ~full_low
    full_mid = ~full_low & ~full_high & (gmin >= a) & (gmax <= b)
    cut = ~(full_low | full_high | full_mid)
    return full_low, full_mid, full_high, cut


def masked_assembly(mesh, gate_total, bounds):
    """Split all triangles by the clamp lines of gate_total = gate + m."""
    a, b = bounds
    tris = mesh.triangles
    areas = triangle_areas(mesh)
    g_tri = gate_total[tris]
    full_low, full_mid, full_high, cut = _classify(g_tri, a, b)
    n = mesh.n_vertices

    rows, cols, vals = [], [], []
    if full_mid.any():
        sub = tris[full_mid]
        base = (np.ones((3, 3)) + np.eye(3)) / 12.0
        me = areas[full_mid][:, None, None] * base[None]
        rows.append(np.repeat(sub, 3, axis=1).ravel())
        cols.append(np.tile(sub, (1, 3)).ravel())
        vals.append(me.ravel())

    f_low = np.zeros(n)
    f_high = np.zeros(n)
    if full_low.any():
        np.add.at(f_low, tris[full_low].ravel(),
                  np.repeat(areas[full_low] / 3.0, 3))
    if full_high.any():
        np.add.at(f_high, tris[full_high].ravel(),
                  np.repeat(areas[full_high] / 3.0, 3))

    cut_idx = np.flatnonzero(cut)
    for t in cut_idx:
        tri = tris[t]
        coords = mesh.vertices[tri]
        pieces = partition_unit_triangle([g_tri[t]], [(a, b)])
        for (code,), poly in pieces:
            pts, w = fan_quadrature(poly, coords, QUAD_DEG2)
            if not len(w):
                continue
            if code == 0:
                block = np.einsum("q,qi,qj->ij", w, pts, pts)
                rows.append(np.repeat(tri, 3))
                cols.append(np.tile(tri, 3))
                vals.append(block.ravel())
            else:
                target = f_low if code < 0 else f_high
                np.add.at(target, tri, w @ pts)

    if rows:
        M_chi = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n)).tocsr()
    else:
        M_chi = sp.csr_matrix((n, n))
    ones = np.ones(n)
    return MaskedAssembly(
        M_chi=M_chi, f_low=f_low, f_high=f_high,
        inactive_area=float(ones @ (M_chi @ ones)),
        area_low=float(f_low.sum()), area_high=float(f_high.sum()),
        cut=cut_idx)


def control_load(ma, u):
    a, b = u.bounds
    return a * ma.f_low + b * ma.f_high + ma.M_chi @ u.inner


def integrate_clamped(mesh, u, ma=None):
    """Exact (integral, squared L2 norm, load vector) of a clamped control."""
    if ma is None:
        ma = masked_assembly(mesh, u.base + u.m, u.bounds)
    a, b = u.bounds
    Mw = ma.M_chi @ u.inner
    integral = a * ma.area_low + b * ma.area_high + float(Mw.sum())
    l2sq = a**2 * ma.area_low + b**2 * ma.area_high + float(u.inner @ Mw)
    load = a * ma.f_low + b * ma.f_high + Mw
    return integral, l2sq, load


def pair_l2_diff(mesh, ua, ub):
    """Exact L2 distance between two clamped controls (shared mesh)."""
    tris = mesh.triangles
    areas = triangle_areas(mesh)
    ga = (ua.base + ua.m)[tris]
    gb = (ub.base + ub.m)[tris]
    la, ha, ma_, ca = _classify(ga, *ua.bounds)
    lb, hb, mb_, cb = _classify(gb, *ub.bounds)
    # integrand is quadratic wherever neither clamp line crosses
    cut = ca | cb
    full = ~cut
    total = 0.0
    if full.any():
        bary, w = QUAD_DEG2
        va = values_at(mesh, ua, bary)[full]
        vb = values_at(mesh, ub, bary)[full]
        total += float(np.einsum("q,tq,t->", w, (va - vb) ** 2, areas[full]))
    aa, ba_ = ua.bounds
    ab, bb = ub.bounds
    ia = ua.inner[tris]
    ib = ub.inner[tris]
    for t in np.flatnonzero(cut):
        coords = mesh.vertices[tris[t]]
        pieces = partition_unit_triangle([ga[t], gb[t]],
                                         [ua.bounds, ub.bounds])
        for (sa, sb), poly in pieces:
            pts, w = fan_quadrature(poly, coords, QUAD_DEG2)
            if not len(w):
                continue
            fa = np.full(len(w), aa) if sa < 0 else (
                np.full(len(w), ba_) if sa > 0 else pts @ ia[t])
            fb = np.full(len(w), ab) if sb < 0 else (
                np.full(len(w), bb) if sb > 0 else pts @ ib[t])
            total += float(w @ (fa - fb) ** 2)
    return float(np.sqrt(max(total, 0.0)))


_ERR_RULE = duffy_rule(5)


def control_error_vs_exact(mesh, surface, u, exact, profile=None, rule=_ERR_RULE):
    """Exact-clipped L2 distance between a clamped control and an analytic one.

    The triangle partition follows the control's own clamp lines and, when
    the smooth pre-clamp profile of the exact control is supplied, the level
    lines of its interpolant, so the quadrature only ever sees smooth
    integrands.
    """
    tris = mesh.triangles
    areas = triangle_areas(mesh)
    a, b = u.bounds
    g1 = (u.base + u.m)[tris]
    gates = [g1]
    if profile is not None:
        g2 = profile(mesh.vertices)[tris]
        gates.append(g2)
    cut = np.zeros(mesh.n_triangles, dtype=bool)
    for g in gates:
        l_, m_, h_, c_ = _classify(g, a, b)
        cut |= c_
    full = ~cut
    bary, w = rule
    total = 0.0
    if full.any():
        vu = values_at(mesh, u, bary)[full]
        p = mesh.vertices[tris[full]]
        pts = np.einsum("qj,tjm->tqm", bary, p)
        lifted = np.atleast_2d(surface.project(pts.reshape(-1, 3)))
        ve = exact(lifted).reshape(vu.shape)
        total += float(np.einsum("q,tq,t->", w, (vu - ve) ** 2, areas[full]))
    inner = u.inner[tris]
    for t in np.flatnonzero(cut):
        coords = mesh.vertices[tris[t]]
        pieces = partition_unit_triangle([g[t] for g in gates],
                                         [u.bounds] * len(gates))
        for codes, poly in pieces:
            pts, ww = fan_quadrature(poly, coords, rule)
            if not len(ww):
                continue
            s1 = codes[0]
            fu = np.full(len(ww), a) if s1 < 0 else (
                np.full(len(ww), b) if s1 > 0 else pts @ inner[t])
            lifted = np.atleast_2d(surface.project(pts @ coords))
            fe = exact(lifted)
            total += float(ww @ (fu - fe) ** 2)
    return float(np.sqrt(max(total, 0.0)))


# ---------------------------------------------------------------------------
# optimality system
# ---------------------------------------------------------------------------

class Discretization:
    """Matrices, data loads, and solution operators for one (spec, mesh)."""

    def __init__(self, spec, mesh, state_tol=1e-10):
        self.spec = spec
        self.mesh = mesh
        self.K = assemble_stiffness(mesh)
        self.M = assemble_mass(mesh)
        self.system = StateSystem(mesh, self.K, self.M, float(spec.c),
                                  spec.bc, tol=state_tol)
        self.pde_iters = 0
        n = mesh.n_vertices
        # The target enters through its nodal interpolant.  Quadrature
        # projection of z would be more accurate in isolation, but for
        # targets that carry a state component (unshifted benchmarks) the
        # interpolant cancels superconvergently against the discrete state
        # in q0 - S*S u; breaking that cancellation inflates the control
        # error constant by a mesh-independent factor.  The shift r is a
        # clamped profile with kinks, so it keeps the exact quadrature load.
        self.b_z = (self.M @ spec.z(mesh.vertices)
                    if spec.z is not None else np.zeros(n))
        self.b_r = (load_vector(mesh, spec.surface, spec.r)
                    if spec.r is not None else None)
        # q0 = S*(z) + S*(S r), fixed across Newton steps
        if self.b_r is not None:
            sr = self.solve(self.b_r)
            self.q0 = self.solve(self.b_z + self.M @ sr)
        else:
            self.q0 = self.solve(self.b_z)

    def solve(self, load):
        y, it = self.system.solve(load)
        self.pde_iters += it
        return y

    def state_for(self, u_load):
        load = u_load if self.b_r is None else u_load - self.b_r
        return self.solve(load)

    def adjoint_pair(self, u_load):
        """State and adjoint for the control with the given load vector."""
        y = self.state_for(u_load)
        p = self.solve(self.M @ y - self.b_z)
        return y, p


def project_admissible(spec, mesh, v):
    """Pointwise projection of a nodal function onto the admissible set."""
    vals = v.values if isinstance(v, NodalFunction) else np.asarray(v, dtype=float)
    m = compute_m(mesh, vals, spec.bounds) if spec.mean_zero else 0.0
    return ClampedControl(mesh, vals, m, spec.bounds)


def adjoint_state(spec, mesh, matrices, u):
    """Adjoint p = S*(S(u - r) - z) of a control given as ClampedControl,
    NodalFunction, or nodal array.  matrices is a Discretization to reuse,
    or None to assemble one."""
    disc = matrices if matrices is not None else Discretization(spec, mesh)
    if isinstance(u, ClampedControl):
        load = control_load(masked_assembly(mesh, u.base + u.m, u.bounds), u)
    else:
        vals = u.values if isinstance(u, NodalFunction) else np.asarray(u, dtype=float)
        load = disc.M @ vals
    _, p = disc.adjoint_pair(load)
    return NodalFunction(mesh, p)


def residual(spec, u, disc=None):
    """Fixed-point defect of a control.

    Returns (G, p_h) with G the exact L2 norm of u - P(-p_h(u)/alpha [+ m])
    and p_h the adjoint at u.  u must carry its mesh (ClampedControl or
    NodalFunction).
    """
    mesh = u.mesh
    disc = disc or Discretization(spec, mesh)
    p = adjoint_state(spec, mesh, disc, u)
    v = -p.values / spec.alpha
    m = compute_m(mesh, v, spec.bounds) if spec.mean_zero else 0.0
    uhat = ClampedControl(mesh, v, m, spec.bounds)
    if not isinstance(u, ClampedControl):
        vals = u.values
        u = ClampedControl(mesh, vals, 0.0,
                           (vals.min() - 1.0, vals.max() + 1.0))
    return pair_l2_diff(mesh, u, uhat), p


def _gate_update(disc, ma, v, vhat, cg_tol=1e-8):
    """One semi-smooth Newton update of the adjoint gate.

    ma is the masked assembly of the current gate; it fixes the inactive
    indicator chi.  Solves (I + (chi/alpha) S*S chi) dv = vhat - v by CG
    in the inactive L2 inner product, then reads the increment on the
    active region off the equation itself, which costs one extra operator
    application.  With the zero-mean shift the operator gains the rank-one
    correction from differentiating m(v) and the iteration runs in the
    zero-mean subspace of the inactive region; the constant part of dv is
    again recovered by the extension.  An (almost) empty inactive region
    degenerates the Newton matrix to the identity, so the update is the
    plain projection step dv = vhat - v.  Returns (v + dv, cg_iterations).
    """
    spec = disc.spec
    alpha = spec.alpha
    n = disc.mesh.n_vertices
    if ma.inactive_area <= 1e-12 * disc.system.area:
        return vhat.copy(), 0
    Mchi = ma.M_chi

    def ss_chi(w):
        return disc.solve(disc.M @ disc.solve(Mchi @ w))

    mdot = lambda x, y: float(x @ (Mchi @ y))
    maxiter = 2 * n + 100
    rhs = vhat - v

    if spec.mean_zero:
        ones = np.ones(n)
        avg = lambda w: float((Mchi @ w).sum()) / ma.inactive_area
        proj = lambda w: w - avg(w) * ones
        op = LinearOperatorHandle(lambda w: w + proj(ss_chi(w) / alpha), n)
        xi, it = cg_solve(op, rhs, tol=cg_tol, maxiter=maxiter,
                          dot=mdot, project=proj)
    else:
        op = LinearOperatorHandle(lambda w: w + ss_chi(w) / alpha, n)
        xi, it = cg_solve(op, rhs, tol=cg_tol, maxiter=maxiter, dot=mdot)
    dv = rhs - ss_chi(xi) / alpha
    return v + dv, it


def newton_step(spec, u, p_h, disc=None, cg_tol=1e-8):
    """One semi-smooth Newton step from the control u and its adjoint p_h.

    The active set is frozen from u's own gate, the gate moves by the
    linearized fixed-point equation, and the returned control is the
    projection of the new gate (with the zero-mean shift re-solved
    exactly), so it is admissible by construction.
    """
    mesh = u.mesh
    disc = disc or Discretization(spec, mesh)
    ma = masked_assembly(mesh, u.base + u.m, u.bounds)
    pv = p_h.values if isinstance(p_h, NodalFunction) else np.asarray(p_h, dtype=float)
    v_new, _ = _gate_update(disc, ma, u.base, -pv / spec.alpha, cg_tol=cg_tol)
    m_new = compute_m(mesh, v_new, spec.bounds) if spec.mean_zero else 0.0
    return ClampedControl(mesh, v_new, m_new, spec.bounds)


@dataclass
class ControlSolution:
    u: ClampedControl
    y: NodalFunction
    p: NodalFunction
    newton_iters: int
    inner_cg_iters: int
    residuals: list
    pde_cg_iters: int
    wall_time: float
    iterates: Optional[list] = None

    def __iter__(self):
        # unpacks as (u, y, p, newton_iters, inner_cg_iters)
        return iter((self.u, self.y, self.p,
                     self.newton_iters, self.inner_cg_iters))


def solve_optimal(spec, mesh, tol=1e-6, max_newton=50, keep_iterates=False,
                  newton_cg_tol=1e-8, state_tol=1e-10):
    """Solve the discrete optimality system to the given fixed-point accuracy.

    Starts from u = 0 and moves the gate v = -p_h/alpha by semi-smooth
    Newton steps until the L2 defect of the projection equation drops
    below tol.  Every iterate is the projection of its own gate, so the
    returned control is admissible pointwise and the returned state and
    adjoint belong to it.
    """
    t0 = time.perf_counter()
    disc = Discretization(spec, mesh, state_tol=state_tol)
    n = mesh.n_vertices
    v = np.zeros(n)
    m = compute_m(mesh, v, spec.bounds) if spec.mean_zero else 0.0
    u = ClampedControl(mesh, v, m, spec.bounds)
    ma = masked_assembly(mesh, v + m, spec.bounds)
    residuals = []
    iterates = [u] if keep_iterates else None
    cg_total = 0
    for k in range(max_newton + 1):
        y_vals, p_vals = disc.adjoint_pair(control_load(ma, u))
        vhat = -p_vals / spec.alpha
        mhat = compute_m(mesh, vhat, spec.bounds) if spec.mean_zero else 0.0
        uhat = ClampedControl(mesh, vhat, mhat, spec.bounds)
        g = pair_l2_diff(mesh, u, uhat)
        residuals.append(g)
        if g <= tol:
            return ControlSolution(
                u=u, y=NodalFunction(mesh, y_vals),
                p=NodalFunction(mesh, p_vals),
                newton_iters=k, inner_cg_iters=cg_total, residuals=residuals,
                pde_cg_iters=disc.pde_iters,
                wall_time=time.perf_counter() - t0, iterates=iterates)
        if k == max_newton:
            break
        v, it = _gate_update(disc, ma, v, vhat, cg_tol=newton_cg_tol)
        cg_total += it
        m = compute_m(mesh, v, spec.bounds) if spec.mean_zero else 0.0
        u = ClampedControl(mesh, v, m, spec.bounds)
        ma = masked_assembly(mesh, v + m, spec.bounds)
        if keep_iterates:
            iterates.append(u)
    raise NoConvergence("no convergence in %d Newton steps" % max_newton, residuals)
