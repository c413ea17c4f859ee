"""Analytic benchmark surfaces.

Each surface provides a signed distance, the closest-point projection onto
the surface, the derivative of that projection (used for the smooth-to-
discrete area element ratio), and closed-form surface Laplacians of the
registered test profiles.  Point routines are vectorized over arrays of
shape (n, 3).
"""

import numpy as np


class OutsideTubularNeighborhood(ValueError):
    """Point lies where the closest-point projection is not unique."""


class DegenerateTriangle(ValueError):
    """Triangle too small or collinear for geometric quantities."""


class UnknownFunction(KeyError):
    """Test profile not registered for this surface."""


def _as_points(p):
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    return np.atleast_2d(p), single


def _restore(x, single):
    return x[0] if single else x


class UnitSphere:
    kind = "sphere"
    has_boundary = False

    def signed_distance(self, p):
        p, single = _as_points(p)
        r = np.linalg.norm(p, axis=1)
        if np.any(r < 1e-12):
            raise OutsideTubularNeighborhood("origin has no unique projection")
        return _restore(r - 1.0, single)

    def project(self, p):
        p, single = _as_points(p)
        r = np.linalg.norm(p, axis=1)
        if np.any(r < 1e-12):
            raise OutsideTubularNeighborhood("origin has no unique projection")
        return _restore(p / r[:, None], single)

    def normal(self, p):
        """Unit outward normal (gradient of the signed distance)."""
        p, single = _as_points(p)
        r = np.linalg.norm(p, axis=1)
        return _restore(p / r[:, None], single)

    def projection_derivative(self, p):
        p, single = _as_points(p)
        r = np.linalg.norm(p, axis=1)
        nu = p / r[:, None]
        eye = np.eye(3)[None, :, :]
        outer = nu[:, :, None] * nu[:, None, :]
        da = (eye - outer) / r[:, None, None]
        return _restore(da, single)

    def area(self):
        return 4.0 * np.pi

    def surface_integral(self, f, n=256):
        # cylindrical coordinates are area preserving on the unit sphere
        t, wt = np.polynomial.legendre.leggauss(n)
        phi = 2.0 * np.pi * (np.arange(n) + 0.5) / n
        tt, pp = np.meshgrid(t, phi, indexing="ij")
        s = np.sqrt(np.clip(1.0 - tt**2, 0.0, None))
        pts = np.stack([s * np.cos(pp), s * np.sin(pp), tt], axis=-1)
        vals = f(pts.reshape(-1, 3)).reshape(n, n)
        return float((wt[:, None] * vals).sum() * (2.0 * np.pi / n))


class Torus:
    """Torus of revolution around the x3 axis, major radius 1, minor 1/2."""

    kind = "torus"
    has_boundary = False
    major = 1.0
    minor = 0.5

    def _ring(self, p):
        s = np.hypot(p[:, 0], p[:, 1])
        if np.any(s < 1e-12):
            raise OutsideTubularNeighborhood("x3 axis has no unique projection")
        return s

    def signed_distance(self, p):
        p, single = _as_points(p)
        s = self._ring(p)
        q = np.hypot(p[:, 2], s - self.major)
        return _restore(q - self.minor, single)

    def project(self, p):
        p, single = _as_points(p)
        s = self._ring(p)
        q = np.hypot(p[:, 2], s - self.major)
        if np.any(q < 1e-12):
            raise OutsideTubularNeighborhood("tube center circle has no unique projection")
        # center-circle point, then walk out radially in the tube cross section
        c = np.zeros_like(p)
        c[:, 0] = self.major * p[:, 0] / s
        c[:, 1] = self.major * p[:, 1] / s
        a = c + self.minor * (p - c) / q[:, None]
        return _restore(a, single)

    def normal(self, p):
        p, single = _as_points(p)
        s = self._ring(p)
        q = np.hypot(p[:, 2], s - self.major)
        u = np.empty_like(p)
        u[:, 0] = (s - self.major) * p[:, 0] / s
        u[:, 1] = (s - self.major) * p[:, 1] / s
        u[:, 2] = p[:, 2]
        return _restore(u / q[:, None], single)

    def projection_derivative(self, p):
        p, single = _as_points(p)
        R = self.major
        s = self._ring(p)
        q = np.hypot(p[:, 2], s - R)
        d = q - self.minor
        shat = np.zeros_like(p)
        shat[:, 0] = p[:, 0] / s
        shat[:, 1] = p[:, 1] / s
        u = (s - R)[:, None] * shat
        u[:, 2] = p[:, 2]
        gq = u / q[:, None]
        pxy = np.diag([1.0, 1.0, 0.0])[None, :, :]
        hs = (pxy - shat[:, :, None] * shat[:, None, :]) / s[:, None, None]
        e3 = np.zeros((1, 3, 3))
        e3[0, 2, 2] = 1.0
        du = shat[:, :, None] * shat[:, None, :] + (s - R)[:, None, None] * hs + e3
        hq = du / q[:, None, None] - u[:, :, None] * u[:, None, :] / q[:, None, None] ** 3
        da = np.eye(3)[None] - gq[:, :, None] * gq[:, None, :] - d[:, None, None] * hq
        return _restore(da, single)

    def area(self):
        return 4.0 * np.pi**2 * self.major * self.minor

    def surface_integral(self, f, n=256):
        # periodic trapezoid in both angles; area element minor*(major+minor*cos th)
        th = 2.0 * np.pi * np.arange(n) / n
        ph = 2.0 * np.pi * np.arange(n) / n
        tt, pp = np.meshgrid(th, ph, indexing="ij")
        tau = self.major + self.minor * np.cos(tt)
        pts = np.stack([tau * np.cos(pp), tau * np.sin(pp), self.minor * np.sin(tt)], axis=-1)
        vals = f(pts.reshape(-1, 3)).reshape(n, n)
        jac = self.minor * tau
        return float((vals * jac).sum() * (2.0 * np.pi / n) ** 2)


class GraphSurface:
    """Graph x3 = x1*x2 over the unit square, oriented with positive x3 normal."""

    kind = "graph"
    has_boundary = True

    def chart(self, w):
        u, v = w[:, 0], w[:, 1]
        return np.stack([u, v, u * v], axis=1)

    def closest_param(self, p, tol=1e-12, maxit=50):
        """Gauss-Newton for the parametric closest-point problem."""
        p, single = _as_points(p)
        u = p[:, 0].copy()
        v = p[:, 1].copy()
        for _ in range(maxit):
            r1 = u - p[:, 0]
            r2 = v - p[:, 1]
            r3 = u * v - p[:, 2]
            g1 = r1 + v * r3
            g2 = r2 + u * r3
            a11 = 1.0 + v * v
            a12 = u * v
            a22 = 1.0 + u * u
            det = a11 * a22 - a12 * a12
            du = -(a22 * g1 - a12 * g2) / det
            dv = -(-a12 * g1 + a11 * g2) / det
            u += du
            v += dv
            if max(np.abs(du).max(), np.abs(dv).max()) <= tol:
                break
        else:
            raise OutsideTubularNeighborhood("closest-point iteration did not converge")
        return _restore(np.stack([u, v], axis=1), single)

    def project(self, p):
        p, single = _as_points(p)
        w = np.atleast_2d(self.closest_param(p))
        return _restore(self.chart(w), single)

    def normal(self, p):
        p, single = _as_points(p)
        w = np.atleast_2d(self.closest_param(p))
        u, v = w[:, 0], w[:, 1]
        n = np.stack([-v, -u, np.ones_like(u)], axis=1)
        n /= np.linalg.norm(n, axis=1)[:, None]
        return _restore(n, single)

    def signed_distance(self, p):
        p, single = _as_points(p)
        w = np.atleast_2d(self.closest_param(p))
        q = self.chart(w)
        diff = p - q
        nu = np.stack([-w[:, 1], -w[:, 0], np.ones(len(w))], axis=1)
        nu /= np.linalg.norm(nu, axis=1)[:, None]
        d = np.sign(np.einsum("ij,ij->i", diff, nu)) * np.linalg.norm(diff, axis=1)
        return _restore(d, single)

    def projection_derivative(self, p):
        # implicit differentiation of the first-order optimality of the
        # closest-point problem: (J^T J + C) Dw = J^T, Da = J Dw,
        # C = r3 * [[0,1],[1,0]] with r3 the residual in the x3 component
        p, single = _as_points(p)
        w = np.atleast_2d(self.closest_param(p))
        u, v = w[:, 0], w[:, 1]
        n = len(u)
        J = np.zeros((n, 3, 2))
        J[:, 0, 0] = 1.0
        J[:, 1, 1] = 1.0
        J[:, 2, 0] = v
        J[:, 2, 1] = u
        r3 = u * v - p[:, 2]
        A = np.empty((n, 2, 2))
        A[:, 0, 0] = 1.0 + v * v
        A[:, 0, 1] = u * v + r3
        A[:, 1, 0] = u * v + r3
        A[:, 1, 1] = 1.0 + u * u
        Jt = np.transpose(J, (0, 2, 1))
        dw = np.linalg.solve(A, Jt)
        da = J @ dw
        return _restore(da, single)

    def area(self):
        return self.surface_integral(lambda q: np.ones(len(q)))

    def surface_integral(self, f, n=128):
        t, wt = np.polynomial.legendre.leggauss(n)
        t = 0.5 * (t + 1.0)
        wt = 0.5 * wt
        uu, vv = np.meshgrid(t, t, indexing="ij")
        pts = np.stack([uu, vv, uu * vv], axis=-1)
        vals = f(pts.reshape(-1, 3)).reshape(n, n)
        jac = np.sqrt(1.0 + uu**2 + vv**2)
        return float(np.einsum("i,j,ij->", wt, wt, vals * jac))


def make_surface(kind):
    try:
        return {"sphere": UnitSphere, "torus": Torus, "graph": GraphSurface}[kind]()
    except KeyError:
        raise UnknownFunction("no surface of kind %r" % kind) from None


def _plane_basis(u):
    """Orthonormal basis of the plane with unit normal u, shape (3, 2)."""
    e = np.zeros(3)
    e[np.argmin(np.abs(u))] = 1.0
    t1 = np.cross(u, e)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(u, t1)
    return np.stack([t1, t2], axis=1)


def jacobian_ratio(surface, tri, bary):
    """Ratio of the smooth to the discrete area element at a triangle point.

    Parameters
    ----------
    tri : (3, 3) array
        Triangle vertex coordinates (rows).
    bary : (3,) array
        Barycentric coordinates of the evaluation point.
    """
    tri = np.asarray(tri, dtype=float)
    e1 = tri[1] - tri[0]
    e2 = tri[2] - tri[0]
    nvec = np.cross(e1, e2)
    a2 = np.linalg.norm(nvec)
    if 0.5 * a2 < 1e-14:
        raise DegenerateTriangle("chordal triangle area below 1e-14")
    x = np.asarray(bary, dtype=float) @ tri
    da = surface.projection_derivative(x)
    th = _plane_basis(nvec / a2)
    q = surface.project(x)
    ta = _plane_basis(surface.normal(q))
    m = ta.T @ da @ th
    return abs(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])


# ---------------------------------------------------------------------------
# registered test profiles g and their surface Laplacians
#
# torus, g = x1*x2*x3: with s = sqrt(x1^2+x2^2) the torus parametrization
# x = tau cos(phi), y = tau sin(phi), z = rho sin(th), tau = R + rho cos(th)
# gives g = (rho/2) sin(th) tau^2 sin(2 phi) and the metric
# ds^2 = rho^2 dth^2 + tau^2 dphi^2.  Evaluating
# (1/sqrt(g)) d_i(sqrt(g) g^{ii} d_i f) and collecting terms yields
#   Delta g = -(x1 x2 x3 / (rho^2 s^2)) (4 (s-R)^2 + 7 (s-R) s + s^2),
# using s = tau, cos(th) = (s-R)/rho, sin(th) = x3/rho on the surface.
#
# graph x3 = x1*x2, f(u,v): with W^2 = 1 + u^2 + v^2,
#   P = (1+u^2) f_u - u v f_v,  Q = -u v f_u + (1+v^2) f_v,
#   Delta f = (P_u + Q_v)/W^2 - (u P + v Q)/W^4.
# Both identities were cross-checked symbolically against the raw metric
# formula before being committed here.
# ---------------------------------------------------------------------------


def _val_one(p):
    return np.ones(len(p))


def _val_x3(p):
    return p[:, 2].copy()


def _val_x3_sectoral(p):
    return p[:, 2] * (p[:, 0] ** 2 - p[:, 1] ** 2)


def _val_sin_sin(p):
    return np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])


def _val_xyz(p):
    return p[:, 0] * p[:, 1] * p[:, 2]


PROFILE_VALUES = {
    "one": _val_one,
    "x3": _val_x3,
    "x3*(x1^2-x2^2)": _val_x3_sectoral,
    "sin(pi*x1)*sin(pi*x2)": _val_sin_sin,
    "x1*x2*x3": _val_xyz,
}


def _lb_zero(surface, p):
    return np.zeros(len(p))


def _lb_sphere_x3(surface, p):
    # spherical harmonic of degree 1
    return -2.0 * p[:, 2]


def _lb_sphere_sectoral(surface, p):
    # spherical harmonic of degree 3, eigenvalue l(l+1) = 12
    return -12.0 * _val_x3_sectoral(p)


def _lb_torus_xyz(surface, p):
    R, rho = surface.major, surface.minor
    s2 = p[:, 0] ** 2 + p[:, 1] ** 2
    s = np.sqrt(s2)
    poly = 4.0 * (s - R) ** 2 + 7.0 * (s - R) * s + s2
    return -(p[:, 0] * p[:, 1] * p[:, 2]) / (rho**2 * s2) * poly


def _lb_graph_sin_sin(surface, p):
    u, v = p[:, 0], p[:, 1]
    w2 = 1.0 + u**2 + v**2
    f = np.sin(np.pi * u) * np.sin(np.pi * v)
    fu = np.pi * np.cos(np.pi * u) * np.sin(np.pi * v)
    fv = np.pi * np.sin(np.pi * u) * np.cos(np.pi * v)
    fuu = -np.pi**2 * f
    fvv = -np.pi**2 * f
    fuv = np.pi**2 * np.cos(np.pi * u) * np.cos(np.pi * v)
    P = (1.0 + u**2) * fu - u * v * fv
    Q = -u * v * fu + (1.0 + v**2) * fv
    Pu = 2.0 * u * fu + (1.0 + u**2) * fuu - v * fv - u * v * fuv
    Qv = -u * fu - u * v * fuv + 2.0 * v * fv + (1.0 + v**2) * fvv
    return (Pu + Qv) / w2 - (u * P + v * Q) / w2**2


LAPLACIANS = {
    ("sphere", "one"): _lb_zero,
    ("sphere", "x3"): _lb_sphere_x3,
    ("sphere", "x3*(x1^2-x2^2)"): _lb_sphere_sectoral,
    ("torus", "one"): _lb_zero,
    ("torus", "x1*x2*x3"): _lb_torus_xyz,
    ("graph", "one"): _lb_zero,
    ("graph", "sin(pi*x1)*sin(pi*x2)"): _lb_graph_sin_sin,
}


def profile_value(fn_id, p):
    try:
        fn = PROFILE_VALUES[fn_id]
    except KeyError:
        raise UnknownFunction("unregistered profile %r" % fn_id) from None
    p, single = _as_points(p)
    return _restore(fn(p), single)


def laplace_beltrami_of(surface, fn_id, p):
    try:
        fn = LAPLACIANS[(surface.kind, fn_id)]
    except KeyError:
        raise UnknownFunction(
            "profile %r has no registered Laplacian on %s" % (fn_id, surface.kind)
        ) from None
    p, single = _as_points(p)
    return _restore(fn(surface, p), single)
