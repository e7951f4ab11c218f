"""Exact rational algebra of convex polygonal sets and weighted polygons.

Everything here is Fraction arithmetic; floating data from the fibration
pipeline enters only through the explicit snapping helpers.  Equivalence of
weighted polygons is decided by comparing canonical forms, never floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .errors import NonConvexResultError

Vec = tuple  # (Fraction, Fraction)


def _frac(x, max_den=None):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    f = Fraction(x)
    return f.limit_denominator(max_den) if max_den else f


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _primitive(dx, dy):
    """Primitive integer vector parallel to the rational direction (dx, dy)."""
    if dx == 0 and dy == 0:
        raise ValueError("zero direction has no primitive vector")
    den = (dx.denominator if isinstance(dx, Fraction) else 1) * \
          (dy.denominator if isinstance(dy, Fraction) else 1)
    ix, iy = int(dx * den), int(dy * den)
    g = math.gcd(abs(ix), abs(iy))
    return (ix // g, iy // g)


def convex_hull(points):
    """Andrew monotone chain over exact rational points; returns CCW cycle."""
    pts = sorted(set((Fraction(p[0]), Fraction(p[1])) for p in points))
    if len(pts) <= 2:
        return pts
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


@dataclass(frozen=True)
class RationalPolygon:
    """Convex polygonal set with exact rational vertices (CCW).

    ``rays`` marks an unbounded set: the boundary chain is open, entering
    along direction rays[0] into vertices[0] and leaving along rays[1]
    from vertices[-1].  ``window`` records the x-interval at which an
    unbounded set was truncated, when that happened.
    """

    vertices: tuple
    rays: tuple = None
    window: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "vertices",
                           tuple((Fraction(v[0]), Fraction(v[1]))
                                 for v in self.vertices))
        self.validate()

    # -- structure ---------------------------------------------------------

    def validate(self):
        v = self.vertices
        n = len(v)
        if self.rays is None:
            if n < 3:
                return
            for i in range(n):
                c = _cross(v[i], v[(i + 1) % n], v[(i + 2) % n])
                if c < 0:
                    raise NonConvexResultError(
                        "vertex breaks convexity", vertex=v[(i + 1) % n])
                if c == 0:
                    raise NonConvexResultError(
                        "collinear vertex in cycle", vertex=v[(i + 1) % n])
        else:
            r_in, r_out = self.rays
            chain = [(v[0][0] - r_in[0], v[0][1] - r_in[1])] + list(v) + \
                    [(v[-1][0] + r_out[0], v[-1][1] + r_out[1])]
            for i in range(len(chain) - 2):
                if _cross(chain[i], chain[i + 1], chain[i + 2]) < 0:
                    raise NonConvexResultError(
                        "chain breaks convexity", vertex=chain[i + 1])

    @property
    def is_bounded(self):
        return self.rays is None

    def edges(self):
        v = self.vertices
        n = len(v)
        if self.is_bounded:
            return [(v[i], v[(i + 1) % n]) for i in range(n)]
        return [(v[i], v[i + 1]) for i in range(n - 1)]

    def contains(self, point):
        p = (Fraction(point[0]), Fraction(point[1]))
        if not self.is_bounded:
            raise ValueError("containment implemented for bounded polygons")
        return all(_cross(a, b, p) >= 0 for a, b in self.edges())

    def x_range(self):
        xs = [v[0] for v in self.vertices]
        return min(xs), max(xs)

    def vertical_section(self, x):
        """Exact interval [ymin, ymax] of the slice at abscissa x, or None."""
        x = Fraction(x)
        ys = []
        segs = self.edges() if self.is_bounded else \
            list(zip(self.vertices[:-1], self.vertices[1:]))
        for a, b in segs:
            x0, x1 = a[0], b[0]
            if x0 == x1:
                if x0 == x:
                    ys += [a[1], b[1]]
                continue
            t_lo, t_hi = (x0, x1) if x0 < x1 else (x1, x0)
            if t_lo <= x <= t_hi:
                t = (x - a[0]) / (b[0] - a[0])
                ys.append(a[1] + t * (b[1] - a[1]))
        for v in self.vertices:
            if v[0] == x:
                ys.append(v[1])
        if not ys:
            return None
        return min(ys), max(ys)

    # -- transforms --------------------------------------------------------

    def map_affine(self, mat, shift=(0, 0)):
        a, b, c, d = (Fraction(mat[0][0]), Fraction(mat[0][1]),
                      Fraction(mat[1][0]), Fraction(mat[1][1]))
        sx, sy = Fraction(shift[0]), Fraction(shift[1])
        new = [(a * x + b * y + sx, c * x + d * y + sy)
               for x, y in self.vertices]
        rays = None
        if self.rays is not None:
            rays = tuple((a * rx + b * ry, c * rx + d * ry)
                         for rx, ry in self.rays)
        det = a * d - b * c
        verts = tuple(new) if det > 0 else tuple(reversed(new))
        return RationalPolygon(verts, rays=rays, window=self.window)

    def translate(self, shift):
        return self.map_affine(((1, 0), (0, 1)), shift)

    def truncate(self, x_lo, x_hi):
        """Clip to the vertical strip [x_lo, x_hi]; result is bounded."""
        x_lo, x_hi = Fraction(x_lo), Fraction(x_hi)
        pts = []
        segs = self.edges() if self.is_bounded else \
            list(zip(self.vertices[:-1], self.vertices[1:]))
        if not self.is_bounded:
            big = max(1, *(abs(v[0]) + abs(v[1]) for v in self.vertices))
            span = 4 * (abs(x_hi) + abs(x_lo) + big + 1)
            r_in, r_out = self.rays
            segs.insert(0, ((self.vertices[0][0] - span * r_in[0],
                             self.vertices[0][1] - span * r_in[1]),
                            self.vertices[0]))
            segs.append((self.vertices[-1],
                         (self.vertices[-1][0] + span * r_out[0],
                          self.vertices[-1][1] + span * r_out[1])))
        for a, b in segs:
            for p in (a, b):
                if x_lo <= p[0] <= x_hi:
                    pts.append(p)
            for xc in (x_lo, x_hi):
                if (a[0] - xc) * (b[0] - xc) < 0:
                    t = (xc - a[0]) / (b[0] - a[0])
                    pts.append((xc, a[1] + t * (b[1] - a[1])))
        return RationalPolygon(convex_hull(pts), window=(x_lo, x_hi))

    def to_json_dict(self):
        out = {"vertices": [[str(x), str(y)] for x, y in self.vertices]}
        if self.rays is not None:
            out["rays"] = [[str(rx), str(ry)] for rx, ry in self.rays]
        if self.window is not None:
            out["window"] = [str(self.window[0]), str(self.window[1])]
        return out

    @staticmethod
    def from_json_dict(data):
        verts = [(Fraction(x), Fraction(y)) for x, y in data["vertices"]]
        rays = data.get("rays")
        if rays is not None:
            rays = tuple((Fraction(rx), Fraction(ry)) for rx, ry in rays)
        window = data.get("window")
        if window is not None:
            window = (Fraction(window[0]), Fraction(window[1]))
        return RationalPolygon(tuple(verts), rays=rays, window=window)


def apply_T(k, polygon):
    """Global shear (x, y) -> (x, y + k x); exact."""
    return polygon.map_affine(((1, 0), (int(k), 1)))


def _with_cut_vertices(polygon, x_cut):
    """Insert boundary points on the line x = x_cut so t_l acts vertexwise."""
    x_cut = Fraction(x_cut)
    out = []
    segs = polygon.edges() if polygon.is_bounded else \
        list(zip(polygon.vertices[:-1], polygon.vertices[1:]))
    pts = []
    for a, b in segs:
        pts.append(a)
        if (a[0] - x_cut) * (b[0] - x_cut) < 0:
            t = (x_cut - a[0]) / (b[0] - a[0])
            pts.append((x_cut, a[1] + t * (b[1] - a[1])))
    if polygon.is_bounded:
        return pts
    return pts + [polygon.vertices[-1]]


def apply_cut_transform(x_cut, n, polygon):
    """Piecewise transform: identity left of x_cut, T^n on the right.

    Convexity of the result is validated, not assumed; an illegal transform
    raises NonConvexResultError carrying the offending vertex.
    """
    x_cut, n = Fraction(x_cut), int(n)
    pts = _with_cut_vertices(polygon, x_cut)
    mapped = [(x, y if x <= x_cut else y + n * (x - x_cut)) for x, y in pts]
    if polygon.is_bounded and len(mapped) >= 3:
        m = len(mapped)
        for i in range(m):
            if _cross(mapped[i], mapped[(i + 1) % m], mapped[(i + 2) % m]) < 0:
                raise NonConvexResultError(
                    f"t_l^{n} at x={x_cut} breaks convexity",
                    vertex=mapped[(i + 1) % m])
    rays = polygon.rays
    if rays is not None:
        r_in, r_out = rays
        start_right = polygon.vertices[0][0] >= x_cut and r_in[0] <= 0
        end_right = polygon.vertices[-1][0] >= x_cut and r_out[0] >= 0
        r_in = (r_in[0], r_in[1] + n * r_in[0]) if start_right else r_in
        r_out = (r_out[0], r_out[1] + n * r_out[0]) if end_right else r_out
        rays = (r_in, r_out)
        cleaned = [mapped[0]]
        for p in mapped[1:]:
            if p != cleaned[-1]:
                cleaned.append(p)
        return RationalPolygon(tuple(cleaned), rays=rays,
                               window=polygon.window)
    return RationalPolygon(convex_hull(mapped), window=polygon.window)


@dataclass(frozen=True)
class WeightedPolygon:
    """Polygon plus oriented vertical cuts and optional twisting labels."""

    polygon: RationalPolygon
    cuts: tuple = ()  # ((x, sign), ...)
    twisting: tuple = None

    def __post_init__(self):
        cuts = tuple((Fraction(x), int(s)) for x, s in self.cuts)
        object.__setattr__(self, "cuts", cuts)
        xs = [x for x, _ in cuts]
        if any(s not in (-1, 1) for _, s in cuts):
            raise ValueError("cut signs must be +1 or -1")
        if xs != sorted(set(xs)):
            raise ValueError("cut abscissas must be strictly increasing")
        lo, hi = self.polygon.x_range() if self.polygon.vertices else (0, 0)
        for x in xs:
            if self.polygon.is_bounded and not (lo < x < hi):
                raise ValueError(f"cut x={x} not interior to the polygon")
        if self.twisting is not None:
            tw = tuple(int(k) for k in self.twisting)
            if len(tw) != len(cuts):
                raise ValueError("twisting labels must match cut count")
            object.__setattr__(self, "twisting", tw)

    @property
    def m_f(self):
        return len(self.cuts)

    def flip_sign(self, i):
        """Flip cut i; the polygon changes by t_l^u with u = (eps-eps')/2."""
        x, s = self.cuts[i]
        u = s  # (s - (-s)) / 2
        poly = apply_cut_transform(x, u, self.polygon)
        cuts = list(self.cuts)
        cuts[i] = (x, -s)
        twisting = None
        if self.twisting is not None:
            twisting = twisting_action_flip(self.twisting, self.cuts, i)
        return WeightedPolygon(poly, tuple(cuts), twisting)

    def apply_T(self, k):
        twisting = None if self.twisting is None else \
            tuple(t + int(k) for t in self.twisting)
        return WeightedPolygon(apply_T(k, self.polygon), self.cuts, twisting)

    def translate_y(self, dy):
        return WeightedPolygon(self.polygon.translate((0, dy)), self.cuts,
                               self.twisting)

    def to_json_dict(self):
        out = self.polygon.to_json_dict()
        out["cuts"] = [{"x": str(x), "sign": s} for x, s in self.cuts]
        if self.twisting is not None:
            out["twisting"] = list(self.twisting)
        return out


def twisting_action_flip(twisting, cuts, i):
    """Induced change of twisting labels when cut i flips sign.

    The global toric momentum map changes by t_{l_i}^{u}; every privileged
    map based at a cut strictly to the right of l_i is compared against a
    T^u-shifted global map, so those labels shift by u; labels at or left
    of the flipped cut keep their comparison branch.
    """
    u = cuts[i][1]
    x_i = cuts[i][0]
    return tuple(k + (u if x > x_i else 0)
                 for k, (x, _) in zip(twisting, cuts))


# ---------------------------------------------------------------------------
# Delzant conditions
# ---------------------------------------------------------------------------

def is_delzant(polygon):
    """Exact smoothness check: |det| of primitive edge pairs is 1 everywhere.

    Returns (flag, report) where report lists per-vertex determinants.
    """
    if not polygon.is_bounded:
        raise ValueError("Delzant check unsupported for unbounded sets")
    v = polygon.vertices
    n = len(v)
    report = []
    ok = True
    for i in range(n):
        prev_v, cur, next_v = v[(i - 1) % n], v[i], v[(i + 1) % n]
        u1 = _primitive(prev_v[0] - cur[0], prev_v[1] - cur[1])
        u2 = _primitive(next_v[0] - cur[0], next_v[1] - cur[1])
        det = u1[0] * u2[1] - u1[1] * u2[0]
        entry = {"vertex": cur, "edges": (u1, u2), "det": det,
                 "smooth": abs(det) == 1}
        ok = ok and entry["smooth"]
        report.append(entry)
    return ok, report


def _corner_semitoric_ok(u1, u2, on_cut):
    det = u1[0] * u2[1] - u1[1] * u2[0]
    if abs(det) == 1:
        return True
    if not on_cut:
        return False
    # corners on a cut line may be smooth only after composing one side
    # with T^{+-1} (fake or hidden corners)
    for k in (-1, 1):
        w2 = (u2[0], u2[1] + k * u2[0])
        if abs(u1[0] * w2[1] - u1[1] * w2[0]) == 1:
            return True
    return False


def is_delzant_semitoric(wp):
    """Necessary corner conditions for a Delzant semitoric polygon.

    Away from cuts the usual smoothness holds; on cut lines the corner may
    be smooth only after a T^{+-1} composition.  The full condition set is
    deliberately extensible.
    """
    poly = wp.polygon
    if not poly.is_bounded and poly.window is None:
        raise ValueError("truncate unbounded polygons before validation")
    target = poly if poly.is_bounded else poly.truncate(*poly.window)
    cut_xs = {x for x, _ in wp.cuts}
    v = target.vertices
    n = len(v)
    reasons = []
    for i in range(n):
        cur = v[i]
        if target.window is not None and cur[0] in target.window:
            continue  # artificial truncation corner
        u1 = _primitive(v[(i - 1) % n][0] - cur[0], v[(i - 1) % n][1] - cur[1])
        u2 = _primitive(v[(i + 1) % n][0] - cur[0], v[(i + 1) % n][1] - cur[1])
        if not _corner_semitoric_ok(u1, u2, cur[0] in cut_xs):
            reasons.append(f"corner at {cur} fails semitoric smoothness")
    return len(reasons) == 0, reasons


# ---------------------------------------------------------------------------
# Canonical form of the weighted-polygon class
# ---------------------------------------------------------------------------

def canonical_weighted_class(wp, window=None):
    """Representative of the orbit under sign flips and vertical-line maps.

    Normalizes every cut sign to +1, then fixes the shear so the edge
    leaving the leftmost-bottom vertex has slope in [0, 1), then translates
    that vertex to height 0.  Two weighted polygons are equivalent iff
    their canonical forms compare equal.  Returns (canonical, transform_log).
    """
    log = []
    cur = wp
    for i, (x, s) in enumerate(wp.cuts):
        if s == -1:
            cur = cur.flip_sign(i)
            log.append(("flip", i))
    poly = cur.polygon
    if not poly.is_bounded:
        if window is None:
            window = poly.window
        if window is None:
            raise ValueError("unbounded polygon needs a truncation window")
        poly = poly.truncate(*window)
        log.append(("truncate", window))
        cur = WeightedPolygon(poly, cur.cuts, cur.twisting)
    anchor = min(poly.vertices)
    n = len(poly.vertices)
    idx = poly.vertices.index(anchor)
    out_dir = None
    for step in range(1, n):
        cand = poly.vertices[(idx + step) % n]
        d = (cand[0] - anchor[0], cand[1] - anchor[1])
        if d[0] != 0:
            out_dir = d
            break
    k = 0
    if out_dir is not None:
        slope = Fraction(out_dir[1], 1) / out_dir[0]
        k = -math.floor(slope)
        cur = cur.apply_T(k)
        log.append(("T", k))
    anchor = min(cur.polygon.vertices)
    cur = cur.translate_y(-anchor[1])
    log.append(("translate_y", -anchor[1]))
    return cur, log


def weighted_polygons_equivalent(a, b, window=None):
    ca, _ = canonical_weighted_class(a, window=window)
    cb, _ = canonical_weighted_class(b, window=window)
    return (ca.polygon.vertices == cb.polygon.vertices
            and ca.cuts == cb.cuts and ca.twisting == cb.twisting)


# ---------------------------------------------------------------------------
# Ingredient validation
# ---------------------------------------------------------------------------

def validate_ingredients(m_f, taylor_linear, weighted, heights, twisting):
    """Check the invariant-record constraints; returns (flag, reasons)."""
    reasons = []
    if m_f < 0:
        reasons.append("m_f must be non-negative")
    if len(taylor_linear) != m_f:
        reasons.append("taylor data length differs from m_f")
    for i, (s1, _) in enumerate(taylor_linear):
        if not (0.0 <= s1 < 2.0 * math.pi):
            reasons.append(f"sigma1 coefficient {i} outside [0, 2*pi)")
    if weighted.m_f != m_f:
        reasons.append("cut count differs from m_f")
    else:
        try:
            ok, corner_reasons = is_delzant_semitoric(weighted)
            reasons.extend(corner_reasons)
        except ValueError as exc:
            reasons.append(str(exc))
    if len(heights) != m_f:
        reasons.append("height list length differs from m_f")
    else:
        for i, ((x, _), h) in enumerate(zip(weighted.cuts, heights)):
            section = weighted.polygon.vertical_section(x) \
                if weighted.polygon.is_bounded else \
                weighted.polygon.truncate(*weighted.polygon.window) \
                .vertical_section(x)
            if section is None:
                reasons.append(f"cut {i} misses the polygon")
                continue
            length = section[1] - section[0]
            if not (0 < h < length):
                reasons.append(
                    f"height {i} = {h} outside (0, {length})")
    if twisting is not None and len(twisting) != m_f:
        reasons.append("twisting list length differs from m_f")
    return len(reasons) == 0, reasons


# ---------------------------------------------------------------------------
# Float-to-exact snapping
# ---------------------------------------------------------------------------

def simplest_between(lo, hi):
    """Fraction with the smallest denominator in the closed interval."""
    lo, hi = Fraction(lo), Fraction(hi)
    if lo > hi:
        lo, hi = hi, lo
    if lo <= 0 <= hi:
        return Fraction(0)
    if hi < 0:
        return -simplest_between(-hi, -lo)
    n = lo.numerator // lo.denominator
    if lo == n:
        return Fraction(n)
    if hi >= n + 1:
        return Fraction(n + 1)
    return n + 1 / simplest_between(1 / (hi - n), 1 / (lo - n))


def snap_value(x, tol):
    """Smallest-denominator rational within tol of the float x."""
    return simplest_between(Fraction(float(x - tol)), Fraction(float(x + tol)))


def snap_direction(dx, dy, tol=1e-3, max_component=64):
    """Primitive integer direction within angular tolerance of (dx, dy)."""
    if abs(dx) >= abs(dy):
        s = snap_value(dy / dx, tol)
        if s.denominator > max_component:
            s = Fraction(dy / dx).limit_denominator(max_component)
        q, p = s.denominator, s.numerator
        if dx < 0:
            q, p = -q, -p
    else:
        s = snap_value(dx / dy, tol)
        if s.denominator > max_component:
            s = Fraction(dx / dy).limit_denominator(max_component)
        q, p = s.numerator, s.denominator
        if dy < 0:
            q, p = -q, -p
    g = math.gcd(abs(q), abs(p))
    return (q // g, p // g)


def snap_polygon(points, max_denominator=64, snap_tol=1e-3):
    """Convert a dense float boundary cloud into an exact rational polygon.

    The convex hull is simplified by merging nearly-collinear edges; each
    remaining edge is least-squares fit over its supporting hull points,
    the direction snapped to a primitive integer vector, the offset to the
    simplest rational within tolerance, and vertices recovered as exact
    intersections of adjacent support lines.
    """
    from scipy.spatial import ConvexHull

    pts = np.asarray(points, float)
    hull = ConvexHull(pts)
    cycle = pts[hull.vertices]  # CCW
    scale = max(np.ptp(cycle[:, 0]), np.ptp(cycle[:, 1]), 1e-9)

    n = len(cycle)
    corner_idx = []
    for i in range(n):
        a, b, c = cycle[(i - 1) % n], cycle[i], cycle[(i + 1) % n]
        v1, v2 = b - a, c - b
        sin_ang = abs(v1[0] * v2[1] - v1[1] * v2[0]) / \
            (np.linalg.norm(v1) * np.linalg.norm(v2) + 1e-300)
        # treat kinks larger than the snap tolerance (per unit edge) as corners
        if sin_ang > 4.0 * snap_tol:
            corner_idx.append(i)
    if len(corner_idx) < 3:
        raise ValueError("degenerate hull; not enough corners to snap")

    m = len(corner_idx)
    min_edge = 16.0 * snap_tol * scale
    lines = []
    for e in range(m):
        i0, i1 = corner_idx[e], corner_idx[(e + 1) % m]
        idx = list(range(i0, i1 + 1)) if i1 > i0 else \
            list(range(i0, n)) + list(range(0, i1 + 1))
        sup = cycle[idx]
        d = sup[-1] - sup[0]
        edge_len = float(np.linalg.norm(d))
        if edge_len < min_edge and len(sup) < 4:
            continue  # micro-edge from corner noise, not a polygon edge
        q, p = snap_direction(d[0], d[1], tol=4.0 * snap_tol * scale / edge_len,
                              max_component=max_denominator)
        cvals = q * sup[:, 1] - p * sup[:, 0]
        c = snap_value(np.median(cvals), snap_tol * math.hypot(q, p))
        if (q, p, c) not in lines:
            lines.append((q, p, c))

    m = len(lines)
    verts = []
    for i in range(m):
        q1, p1, c1 = lines[(i - 1) % m]
        q2, p2, c2 = lines[i]
        det = Fraction(-p1 * q2 + p2 * q1)
        if det == 0:
            continue
        x = (c1 * q2 - c2 * q1) / det
        y = (c1 * p2 - c2 * p1) / det
        verts.append((x, y))
    return RationalPolygon(convex_hull(verts))
