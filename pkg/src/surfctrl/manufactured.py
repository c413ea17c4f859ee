"""Benchmark problems with known exact optimal controls.

The construction picks the smooth profile g first.  With the shifted
right-hand side r = clamp(g) the optimal state vanishes, the adjoint is
-alpha g, and the target z = alpha (c g - Delta_Gamma g) closes the
optimality system exactly, since clamp(g) is the projection of g.  One
benchmark does not shift (r = 0); there the target carries the explicitly
integrated state as a piecewise closed form.
"""

from enum import Enum

import numpy as np

from .control import ProblemSpec
from .geometry import (_as_points, _restore, laplace_beltrami_of,
                       make_surface, profile_value)


class Benchmark(Enum):
    SPHERE_I = "sphere1"
    GRAPH_SQUARE = "graph"
    SPHERE_II = "sphere2"
    TORUS = "torus"


def _resolve(bid):
    if isinstance(bid, Benchmark):
        return bid
    try:
        return Benchmark(bid)
    except ValueError:
        raise ValueError("unknown benchmark %r" % (bid,)) from None


def _vec(fn):
    """Let a (n, 3) -> (n,) function also accept a single point."""
    def wrapped(p):
        pts, single = _as_points(p)
        out = fn(pts)
        return float(out[0]) if single else out
    return wrapped


def generate_z(surface, g, alpha, c, shift_r=True, scale=1.0, mean_fix=False):
    """Target z = alpha (c g - Delta_Gamma g) for a registered profile g.

    With the data shift r = clamp(scale * g) wired into the state equation
    this z makes clamp(scale * g) the optimal control.  With shift_r False
    the same smooth expression is returned as an ingredient; the caller
    must then add the state contribution itself.  mean_fix subtracts the
    surface average of z, which only matters for c = 0 on closed surfaces
    where the target is determined up to a constant.
    """
    def z_raw(p):
        pts, single = _as_points(p)
        val = scale * profile_value(g, pts)
        lap = scale * laplace_beltrami_of(surface, g, pts)
        return _restore(alpha * (c * val - lap), single)

    if not (mean_fix and shift_r):
        return z_raw
    offset = surface.surface_integral(z_raw) / surface.area()
    return _vec(lambda p: z_raw(p) - offset)


# per-benchmark smooth profile (pre-clamp) and clamp bounds
_EXACT = {
    Benchmark.SPHERE_I: (
        lambda p: 4.0 * p[:, 2] * (p[:, 0] ** 2 - p[:, 1] ** 2), (-1.0, 1.0)),
    Benchmark.GRAPH_SQUARE: (
        lambda p: np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1]), (-0.5, 0.5)),
    Benchmark.SPHERE_II: (
        lambda p: 2.0 * p[:, 2], (-1.0, 1.0)),
    Benchmark.TORUS: (
        lambda p: 5.0 * p[:, 0] * p[:, 1] * p[:, 2], (-1.0, 1.0)),
}


def exact_control(bid, p):
    """Pointwise optimal control of a benchmark."""
    profile, (a, b) = _EXACT[_resolve(bid)]
    pts, single = _as_points(p)
    return _restore(np.clip(profile(pts), a, b), single)


# the continuity constant of the piecewise target below
SPHERE_II_C = 0.5 - 0.25 * np.arctanh(0.5) - np.log(1.5)


def sphere2_exact_state(t):
    """Exact state of the unshifted sphere benchmark, as a function of x3.

    Piecewise: logarithmic caps where the control saturates, and
    x3 - arctanh(x3)/4 on the middle band; the constant makes the pieces
    meet continuously (the normal fluxes already match).  Band membership
    ties at |x3| = 0.5 go to the middle band.
    """
    t = np.asarray(t, dtype=float)
    band = np.abs(t) <= 0.5
    upper = t > 0.5
    lower = t < -0.5
    out = np.empty_like(t)
    tb = np.clip(t, -0.5, 0.5)
    mid = tb - 0.25 * np.arctanh(tb)
    out[band] = mid[band]
    out[upper] = np.log1p(t[upper]) + SPHERE_II_C
    out[lower] = -SPHERE_II_C - np.log1p(-t[lower])
    return out


def build_example(bid):
    bid = _resolve(bid)
    profile, bounds = _EXACT[bid]
    clamped = _vec(lambda p: np.clip(profile(p), *bounds))

    if bid is Benchmark.SPHERE_I:
        surface = make_surface("sphere")
        alpha = 1.5e-6
        z = generate_z(surface, "x3*(x1^2-x2^2)", alpha, c=1.0, scale=4.0)
        return ProblemSpec(surface=surface, c=1.0, alpha=alpha, bounds=bounds,
                           z=z, r=clamped, u_exact=clamped,
                           control_profile=_vec(profile), name=bid.value)

    if bid is Benchmark.GRAPH_SQUARE:
        surface = make_surface("graph")
        alpha = 1.0e-3
        z = generate_z(surface, "sin(pi*x1)*sin(pi*x2)", alpha, c=0.0)
        return ProblemSpec(surface=surface, c=0.0, alpha=alpha, bounds=bounds,
                           dirichlet=True, z=z, r=clamped, u_exact=clamped,
                           control_profile=_vec(profile), name=bid.value)

    if bid is Benchmark.SPHERE_II:
        surface = make_surface("sphere")
        alpha = 1.0e-3

        def z(p):
            pts, single = _as_points(p)
            t = pts[:, 2]
            return _restore(sphere2_exact_state(t) + 4.0 * alpha * t, single)

        return ProblemSpec(surface=surface, c=0.0, alpha=alpha, bounds=bounds,
                           mean_zero=True, z=z, r=None, u_exact=clamped,
                           control_profile=_vec(profile), name=bid.value)

    surface = make_surface("torus")
    alpha = 1.0e-3
    z = generate_z(surface, "x1*x2*x3", alpha, c=0.0, scale=5.0, mean_fix=True)
    return ProblemSpec(surface=surface, c=0.0, alpha=alpha, bounds=bounds,
                       mean_zero=True, z=z, r=clamped, u_exact=clamped,
                       control_profile=_vec(profile), name=bid.value)
