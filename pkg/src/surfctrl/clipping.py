"""Exact integration over triangles cut by level lines of P1 functions.

Two mechanisms:

* a vectorized closed form for the integral of the positive part of a
  linear function over a triangle (drives the scalar root-find for the
  zero-mean shift, which evaluates the clamp integral many times);

* Sutherland-Hodgman clipping of a triangle into the sub-polygons where a
  set of clamped P1 functions is pure (below, linear, above), carried out
  in barycentric coordinates.  Integrands are polynomials of degree <= 2
  on each sub-polygon, so a degree-2 rule on a fan triangulation is exact.
"""

import numpy as np


def positive_part_integral(d_sorted, areas):
    """Integral of max(linear, 0) per triangle.

    d_sorted : (t, 3) vertex values sorted ascending per row.
    areas    : (t,) triangle areas.
    """
    d1, d2, d3 = d_sorted[:, 0], d_sorted[:, 1], d_sorted[:, 2]
    mean = (d1 + d2 + d3) / 3.0
    out = np.where(d1 >= 0.0, areas * mean, 0.0)
    one_pos = (d2 <= 0.0) & (d3 > 0.0)
    den1 = np.where(one_pos, (d3 - d1) * (d3 - d2), 1.0)
    out = np.where(one_pos, areas * d3**3 / (3.0 * den1), out)
    two_pos = (d1 < 0.0) & (d2 > 0.0)
    den2 = np.where(two_pos, (d3 - d1) * (d2 - d1), 1.0)
    out = np.where(two_pos, areas * (mean - d1**3 / (3.0 * den2)), out)
    return out


def clamp_integral(v_sorted, areas, a, b, shift=0.0):
    """Exact integral of clamp(v + shift, a, b) summed over all triangles."""
    total_area = areas.sum()
    lo = positive_part_integral(v_sorted + (shift - a), areas).sum()
    hi = positive_part_integral(v_sorted + (shift - b), areas).sum()
    return a * total_area + lo - hi


def clip_poly(poly, vals, threshold, keep_above):
    """Clip a polygon (rows of barycentric coordinates) against a level line.

    vals are the function values at the polygon vertices (linear along
    edges).  Returns the kept polygon, possibly empty.
    """
    n = len(poly)
    if n == 0:
        return poly
    if keep_above:
        inside = vals >= threshold
    else:
        inside = vals <= threshold
    if inside.all():
        return poly
    if not inside.any():
        return poly[:0]
    out = []
    for i in range(n):
        j = (i + 1) % n
        pi, pj = poly[i], poly[j]
        vi, vj = vals[i], vals[j]
        ii, ij = inside[i], inside[j]
        if ii:
            out.append(pi)
        if ii != ij:
            t = (threshold - vi) / (vj - vi)
            out.append(pi + t * (pj - pi))
    return np.array(out)


def partition_unit_triangle(gates, bounds_list):
    """Split the reference triangle by the level lines of clamped gates.

    gates : sequence of (3,) vertex value arrays, one per clamp.
    bounds_list : matching sequence of (a, b) clamp bounds.

    Returns a list of (codes, polygon) with codes a tuple holding -1, 0, or
    +1 per gate (below a, between, above b) and polygon the barycentric
    vertex array of the region.
    """
    pieces = [((), np.eye(3))]
    for g, (a, b) in zip(gates, bounds_list):
        g = np.asarray(g, dtype=float)
        nxt = []
        for codes, poly in pieces:
            vals = poly @ g
            low = clip_poly(poly, vals, a, keep_above=False)
            mid = clip_poly(poly, vals, a, keep_above=True)
            if len(mid):
                high = clip_poly(mid, mid @ g, b, keep_above=True)
                mid = clip_poly(mid, mid @ g, b, keep_above=False)
            else:
                high = mid
            for code, part in ((-1, low), (0, mid), (1, high)):
                if len(part) >= 3:
                    nxt.append((codes + (code,), part))
        pieces = nxt
    return pieces


def fan_quadrature(poly, tri_coords, rule):
    """Quadrature points/weights over a convex polygon inside a triangle.

    poly : (k, 3) barycentric vertices of the polygon.
    tri_coords : (3, 3) physical coordinates of the parent triangle.
    rule : (bary, weights) reference rule with weights summing to one.

    Returns (points_bary, weights); weights carry the physical areas, so
    sum(weights * f(points)) integrates f over the polygon.
    """
    bary_rule, w_rule = rule
    phys = poly @ tri_coords
    pts = []
    wts = []
    for k in range(1, len(poly) - 1):
        sub = np.stack([poly[0], poly[k], poly[k + 1]])
        cross = np.cross(phys[k] - phys[0], phys[k + 1] - phys[0])
        area = 0.5 * np.linalg.norm(cross)
        if area < 1e-300:
            continue
        pts.append(bary_rule @ sub)
        wts.append(w_rule * area)
    if not pts:
        return np.empty((0, 3)), np.empty(0)
    return np.vstack(pts), np.concatenate(wts)


def polygon_area(poly, tri_coords):
    phys = poly @ tri_coords
    total = 0.0
    for k in range(1, len(poly) - 1):
        cross = np.cross(phys[k] - phys[0], phys[k + 1] - phys[0])
        total += 0.5 * np.linalg.norm(cross)
    return total
