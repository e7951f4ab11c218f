"""Momentum-map image, monodromy, and the affine developing map.

The regular-value set carries the integral affine structure whose charts
are action variables; numerically it is encoded by the period lattice row
(tau1, tau2).  Development integrates the closed 1-form
(tau1 dc1 + tau2 dc2)/(2*pi) along polyline paths that avoid the vertical
cuts, with the tau1 branch continued point-to-point rather than normalized,
so no spurious shear jumps appear.  Near a focus-focus value tau2 blows up
logarithmically; quadrature chunks shrink proportionally to the distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .critical import find_critical_points
from .dynamics import find_point_on_fiber, torus_period_basis
from .errors import AffineStructureError, RefineStepError
from .polygons import RationalPolygon, WeightedPolygon, snap_polygon, snap_value
from .systems import DEFAULT_TOL

TWO_PI = 2.0 * math.pi

# paths never approach a critical value closer than this (value units)
RADIUS_MIN = 1e-3

# Gauss-Legendre nodes/weights on [0, 1], order 4
_GL = np.polynomial.legendre.leggauss(4)
_GL_NODES = (_GL[0] + 1.0) / 2.0
_GL_WEIGHTS = _GL[1] / 2.0


# ---------------------------------------------------------------------------
# Bifurcation diagram
# ---------------------------------------------------------------------------

@dataclass
class BifurcationDiagram:
    window: tuple
    j_grid: np.ndarray
    h_lo: np.ndarray
    h_hi: np.ndarray
    regular_samples: list
    critical_values: list
    focus_focus_values: list
    records: list

    @property
    def boundary(self):
        """Boundary polylines [lower, upper] as (j, h) arrays."""
        good = ~np.isnan(self.h_lo)
        lower = np.column_stack([self.j_grid[good], self.h_lo[good]])
        upper = np.column_stack([self.j_grid[good], self.h_hi[good]])
        return [lower, upper]

    @property
    def m_f(self):
        return len(self.focus_focus_values)

    def fiber_interval(self, j):
        """Interpolated (h_lo, h_hi) at abscissa j, or None outside."""
        good = ~np.isnan(self.h_lo)
        js = self.j_grid[good]
        if len(js) == 0 or j < js[0] - 1e-9 or j > js[-1] + 1e-9:
            return None
        lo = float(np.interp(j, js, self.h_lo[good]))
        hi = float(np.interp(j, js, self.h_hi[good]))
        return lo, hi


def _level_seed(system, j, rng, scale, tries=60):
    """A manifold point with J(p) = j, by 1-d Newton from random starts."""
    manifold = system.manifold
    for _ in range(tries):
        p = manifold.random_point(rng, scale=scale)
        converged = False
        for _ in range(50):
            r = system.j_field.value(p) - j
            if abs(r) < 1e-10:
                converged = True
                break
            basis = manifold.tangent_basis(p)
            g = system.j_field.gradient(p) @ basis
            n2 = g @ g
            if n2 < 1e-16:
                break
            p = manifold.project(p - basis @ g * (r / n2))
        if converged:
            return p
    return None


def _fiber_extent(system, j, sense, rng, scale, warm=None, bound=None,
                  starts=4):
    """Extremal H over the J-level set, by SLSQP from several starts."""
    manifold = system.manifold
    has_constraints = manifold.constraints(
        manifold.random_point(rng)).size > 0

    def objective(p):
        return -sense * system.h_field.value(p)

    def objective_grad(p):
        return -sense * system.h_field.gradient(p)

    cons = [{"type": "eq",
             "fun": lambda p: system.j_field.value(p) - j,
             "jac": lambda p: system.j_field.gradient(p)}]
    if has_constraints:
        cons.append({"type": "eq",
                     "fun": lambda p: manifold.constraints(p),
                     "jac": lambda p: manifold.constraint_grads(p)})
    bounds = None
    if bound is not None:
        bounds = [(-bound, bound)] * manifold.dim_ambient

    best = None
    cand = [warm] if warm is not None else []
    cand += [_level_seed(system, j, rng, scale) for _ in range(starts)]
    for start in cand:
        if start is None:
            continue
        res = minimize(objective, start, jac=objective_grad, method="SLSQP",
                       constraints=cons, bounds=bounds,
                       options={"maxiter": 200, "ftol": 1e-12})
        if res is None or not np.all(np.isfinite(res.x)):
            continue
        p = manifold.project(res.x)
        if abs(system.j_field.value(p) - j) > 1e-6:
            continue
        val = system.h_field.value(p)
        if best is None or sense * val > sense * best[0]:
            best = (val, p)
    return best


def bifurcation_diagram(system, window, resolution=48, records=None,
                        rng_seed=0, bound=None):
    """Critical values, boundary envelope, and regular samples in a window."""
    j0, j1, h0, h1 = window
    if not (j1 > j0 and h1 > h0):
        raise ValueError("empty or degenerate value window")
    rng = np.random.default_rng(rng_seed)
    scale = max(1.5, math.sqrt(2.0 * (abs(j1) + 1.5)))
    if records is None:
        records = find_critical_points(system, region=window,
                                       grid=max(8, resolution // 3))
    critical_values = [(tuple(r.value), r.williamson, r.rank) for r in records]
    ff = sorted(tuple(r.value) for r in records if r.is_focus_focus)

    j_grid = np.linspace(j0, j1, resolution)
    h_lo = np.full(resolution, np.nan)
    h_hi = np.full(resolution, np.nan)
    warm_lo = warm_hi = None
    for k, j in enumerate(j_grid):
        top = _fiber_extent(system, j, +1, rng, scale, warm=warm_hi,
                            bound=bound)
        bot = _fiber_extent(system, j, -1, rng, scale, warm=warm_lo,
                            bound=bound)
        if top is None or bot is None or top[0] < bot[0] - 1e-9:
            continue
        h_hi[k], warm_hi = top[0], top[1]
        h_lo[k], warm_lo = bot[0], bot[1]

    regular = []
    for k, j in enumerate(j_grid):
        if np.isnan(h_lo[k]) or h_hi[k] - h_lo[k] < 1e-6:
            continue
        pad = 0.06 * (h_hi[k] - h_lo[k])
        for h in np.linspace(h_lo[k] + pad, h_hi[k] - pad, 9):
            if h0 <= h <= h1 and all(
                    math.hypot(j - c[0], h - c[1]) > 10 * RADIUS_MIN
                    for c in ff):
                regular.append((float(j), float(h)))
    return BifurcationDiagram(
        window=tuple(window), j_grid=j_grid, h_lo=h_lo, h_hi=h_hi,
        regular_samples=regular, critical_values=critical_values,
        focus_focus_values=ff, records=records)


# ---------------------------------------------------------------------------
# Lattice transport
# ---------------------------------------------------------------------------

class LatticeTracker:
    """Period lattices along a path with the tau1 branch carried over."""

    def __init__(self, system, tol=None, residual_tol=None):
        self.system = system
        self.tol = tol if tol is not None else 1e-10
        self.residual_tol = residual_tol if residual_tol is not None \
            else DEFAULT_TOL.lattice_residual
        self.state = None  # (c, t1_raw, t2, seed)

    def get_state(self):
        return self.state

    def set_state(self, state):
        self.state = state

    def restart(self):
        self.state = None

    def evaluate(self, c, max_split=12):
        """Lattice row (tau1_raw, tau2) at c, continued from the last point."""
        c = (float(c[0]), float(c[1]))
        if self.state is None:
            lat = torus_period_basis(self.system, c, tol=self.tol,
                                     residual_tol=self.residual_tol)
            self.state = (c, lat.tau1_raw, lat.tau2, lat.seed)
            return lat.tau1_raw, lat.tau2
        c_prev, t1_prev, t2_prev, seed_prev = self.state
        if c == c_prev:
            return t1_prev, t2_prev
        seed = find_point_on_fiber(self.system, c, start=seed_prev.array)
        lat = torus_period_basis(self.system, c, seed=seed,
                                 guess=(t1_prev, t2_prev), tol=self.tol,
                                 residual_tol=self.residual_tol)
        jump_ok = (abs(lat.tau1_raw - t1_prev) < 2.5
                   and abs(lat.tau2 - t2_prev) < 0.5 * t2_prev + 0.5)
        if not jump_ok:
            if max_split <= 0:
                raise RefineStepError(
                    f"lattice branch tracking ambiguous between {c_prev} "
                    f"and {c}; subdivide the step", suggested_steps=2)
            mid = (0.5 * (c_prev[0] + c[0]), 0.5 * (c_prev[1] + c[1]))
            self.evaluate(mid, max_split=max_split - 1)
            return self.evaluate(c, max_split=max_split - 1)
        self.state = (c, lat.tau1_raw, lat.tau2, lat.seed)
        return lat.tau1_raw, lat.tau2


@dataclass
class MonodromyResult:
    loop: np.ndarray
    matrix: np.ndarray
    max_residual: float


def monodromy(system, center, radius, steps=24, tol=None, orientation=+1):
    """Integer lattice monodromy around a circle around ``center``.

    Bases at consecutive loop points are re-attached by the nearest lattice
    element (warm-started shooting); the relation between final and initial
    basis is T^m with m read off the total tau1 increment.
    """
    tracker = LatticeTracker(system, tol=tol)
    thetas = np.linspace(0.0, orientation * TWO_PI, steps + 1)
    loop = np.column_stack([center[0] + radius * np.cos(thetas),
                            center[1] + radius * np.sin(thetas)])
    t1_start, t2_start = tracker.evaluate(loop[0])
    t1_end, t2_end = t1_start, t2_start
    for c in loop[1:]:
        t1_end, t2_end = tracker.evaluate(c)
    m_float = (t1_end - t1_start) / TWO_PI
    m = int(round(m_float))
    residual = max(abs(m_float - m),
                   abs(t2_end - t2_start) / max(1.0, abs(t2_start)))
    if residual > 0.05:
        raise RefineStepError(
            f"monodromy integer residual {residual:.3f} too large; "
            "refine the loop", suggested_steps=2 * steps)
    matrix = np.array([[1, 0], [m, 1]], dtype=int)
    return MonodromyResult(loop=loop, matrix=matrix,
                           max_residual=float(residual))


# ---------------------------------------------------------------------------
# Developing map
# ---------------------------------------------------------------------------

class Developer:
    """Integrates the period 1-form along cut-avoiding polyline paths."""

    def __init__(self, system, diagram, cut_signs, tol=None):
        self.system = system
        self.diagram = diagram
        self.ff = list(diagram.focus_focus_values)
        if len(cut_signs) != len(self.ff):
            raise ValueError("one cut sign per focus-focus value required")
        self.cut_signs = tuple(int(s) for s in cut_signs)
        self.tracker = LatticeTracker(system, tol=tol)

    def _dist_ff(self, c):
        if not self.ff:
            return math.inf
        return min(math.hypot(c[0] - f[0], c[1] - f[1]) for f in self.ff)

    def _crosses_cut(self, a, b):
        for (x_i, y_i), s in zip(self.ff, self.cut_signs):
            if (a[0] - x_i) * (b[0] - x_i) < 0:
                t = (x_i - a[0]) / (b[0] - a[0])
                y = a[1] + t * (b[1] - a[1])
                if (s > 0 and y >= y_i - RADIUS_MIN) or \
                        (s < 0 and y <= y_i + RADIUS_MIN):
                    return True
        return False

    def _segment_integral(self, a, b):
        """Integral of (tau1 dc1 + tau2 dc2)/(2*pi) along one segment.

        Composite Gauss-Legendre; chunk lengths shrink with the distance to
        the focus-focus values so the tau1 branch never jumps between
        consecutive evaluations and the log growth of tau2 is resolved.
        """
        a = np.asarray(a, float)
        b = np.asarray(b, float)
        length = float(np.linalg.norm(b - a))
        if length == 0.0:
            return 0.0
        total = 0.0
        s = 0.0
        while s < length - 1e-15:
            pos = a + (b - a) * (s / length)
            dist = self._dist_ff(pos)
            step = min(length - s, max(0.5 * dist, 1e-4), 0.6)
            frac0, frac1 = s / length, (s + step) / length
            for node, weight in zip(_GL_NODES, _GL_WEIGHTS):
                frac = frac0 + (frac1 - frac0) * node
                c = a + (b - a) * frac
                t1, t2 = self.tracker.evaluate(c)
                integrand = (t1 * (b[0] - a[0])
                             + t2 * (b[1] - a[1])) / TWO_PI
                total += weight * (frac1 - frac0) * integrand
            s += step
        return total

    def develop_chain(self, waypoints):
        """Cumulative f2 values at each waypoint (first is 0)."""
        values = [0.0]
        for a, b in zip(waypoints[:-1], waypoints[1:]):
            if self._crosses_cut(a, b):
                raise AffineStructureError(
                    f"path segment {a} -> {b} crosses a cut")
            values.append(values[-1] + self._segment_integral(a, b))
        return values

    def corridor_height(self, j):
        """Safe corridor ordinate at abscissa j, passing cuts correctly."""
        interval = self.diagram.fiber_interval(j)
        if interval is None:
            raise AffineStructureError(f"abscissa {j} outside the image")
        lo, hi = interval
        pad = 0.08 * (hi - lo)
        lo_c, hi_c = lo + pad, hi - pad
        clamp_w = 0.2 * (self.diagram.window[1] - self.diagram.window[0])
        for (x_i, y_i), s in zip(self.ff, self.cut_signs):
            if abs(j - x_i) < clamp_w:
                gap = 0.2 * (hi - lo)
                if s > 0:
                    hi_c = min(hi_c, y_i - gap)
                else:
                    lo_c = max(lo_c, y_i + gap)
        if hi_c < lo_c:
            lo_c = hi_c = 0.5 * (lo_c + hi_c)
        return 0.5 * (lo_c + hi_c)


@dataclass
class DevelopingMap:
    """Result of straightening the affine structure with fixed cut signs.

    ``samples`` maps rounded value pairs to the developed second
    coordinate; the first component of the developing map is the identity.
    ``corridor`` keeps per-abscissa branch states for follow-up
    computations (twisting indices, heights).
    """

    cut_signs: tuple
    base_point: tuple
    samples: dict
    polygon: RationalPolygon
    weighted: WeightedPolygon
    diagram: BifurcationDiagram
    cut_images: list
    boundary_images: dict
    loop_residual: float
    corridor: dict
    developer: Developer

    def f2(self, c):
        return self.samples[(round(float(c[0]), 12), round(float(c[1]), 12))]

    def image(self, c):
        return (float(c[0]), self.f2(c))

    def develop(self, c):
        """Develop an arbitrary regular value on demand (cached)."""
        key = (round(float(c[0]), 12), round(float(c[1]), 12))
        if key in self.samples:
            return self.samples[key]
        dev = self.developer
        xs = sorted(self.corridor)
        x_near = min(xs, key=lambda x: abs(x - c[0]))
        entry_val, entry_state = self.corridor[x_near]
        entry = (x_near, dev.corridor_height(x_near))
        mid = (c[0], dev.corridor_height(c[0]))
        dev.tracker.set_state(entry_state)
        vals = dev.develop_chain([entry, mid, (c[0], c[1])])
        value = entry_val + vals[-1]
        self.samples[key] = value
        return value

    def tracked_lattice(self, c):
        """Lattice at c with tau1 on the globally developed branch."""
        self.develop(c)
        return self.developer.tracker.evaluate((float(c[0]), float(c[1])))


def _near_boundary_targets(diagram, offset_frac=0.02):
    """(j, h, side) triples hugging the elliptic boundary from inside."""
    targets = []
    good = ~np.isnan(diagram.h_lo)
    for j, lo, hi in zip(diagram.j_grid[good], diagram.h_lo[good],
                         diagram.h_hi[good]):
        height = hi - lo
        if height < 20 * RADIUS_MIN:
            continue
        off = max(offset_frac * height, 2 * RADIUS_MIN)
        targets.append((float(j), float(lo + off), "lo"))
        targets.append((float(j), float(hi - off), "hi"))
    return targets


def develop_affine(system, diagram, cut_signs, tol=None, base_point=None,
                   max_denominator=64, snap_tol=2.5e-3, check_loops=True,
                   include_samples=False):
    """Straighten the regular region; returns a DevelopingMap.

    The second component is the line integral of the period form from the
    base point (leftmost-lowest regular sample unless given) along a
    corridor-plus-vertical path tree; the polygon is the rational snap of
    the developed boundary cloud, truncated at the window for non-compact
    images.  ``include_samples`` additionally develops every regular grid
    sample (slower); individual values remain available on demand through
    DevelopingMap.develop.
    """
    dev = Developer(system, diagram, cut_signs, tol=tol)
    if not diagram.regular_samples:
        raise AffineStructureError("no regular samples in the diagram")
    if base_point is None:
        base_point = min(diagram.regular_samples)
    base = (float(base_point[0]), float(base_point[1]))

    boundary_targets = _near_boundary_targets(diagram)
    # drop ring targets on top of a cut line
    boundary_targets = [
        (j, h, side) for (j, h, side) in boundary_targets
        if all(abs(j - x_i) > RADIUS_MIN
               for (x_i, _) in diagram.focus_focus_values)]
    # bracket each cut abscissa closely so polygon corners on cuts resolve
    for (x_i, _) in diagram.focus_focus_values:
        for dx in (-3e-3, 3e-3):
            j = float(x_i) + dx
            interval = diagram.fiber_interval(j)
            if interval is None:
                continue
            lo, hi = interval
            off = max(0.02 * (hi - lo), 2 * RADIUS_MIN)
            boundary_targets.append((j, lo + off, "lo"))
            boundary_targets.append((j, hi - off, "hi"))
    grid_targets = list(diagram.regular_samples) if include_samples else []

    by_x = {}
    for (j, h, side) in boundary_targets:
        by_x.setdefault(round(j, 12), []).append((h, ("boundary", side)))
    for (j, h) in grid_targets:
        by_x.setdefault(round(j, 12), []).append((h, ("sample", None)))

    # corridor pass: accumulate value and branch state at every abscissa
    xs = sorted(set(by_x) | {round(base[0], 12)})
    corr_y = {x: dev.corridor_height(x) for x in xs}
    corridor = {}
    k0 = xs.index(round(base[0], 12))
    dev.tracker.restart()
    vals = dev.develop_chain([base, (xs[k0], corr_y[xs[k0]])])
    corridor[xs[k0]] = (vals[-1], dev.tracker.get_state())
    for k in range(k0 + 1, len(xs)):
        prev_val, prev_state = corridor[xs[k - 1]]
        dev.tracker.set_state(prev_state)
        seg = dev.develop_chain([(xs[k - 1], corr_y[xs[k - 1]]),
                                 (xs[k], corr_y[xs[k]])])
        corridor[xs[k]] = (prev_val + seg[-1], dev.tracker.get_state())
    for k in range(k0 - 1, -1, -1):
        prev_val, prev_state = corridor[xs[k + 1]]
        dev.tracker.set_state(prev_state)
        seg = dev.develop_chain([(xs[k + 1], corr_y[xs[k + 1]]),
                                 (xs[k], corr_y[xs[k]])])
        corridor[xs[k]] = (prev_val + seg[-1], dev.tracker.get_state())

    # vertical passes: from each corridor node up and down in order
    samples = {}
    boundary_images = {}
    boundary_cloud = []
    for x in xs:
        if x not in by_x:
            continue
        entry_val, entry_state = corridor[x]
        entry = (x, corr_y[x])
        ups = sorted([t for t in by_x[x] if t[0] >= entry[1]])
        downs = sorted([t for t in by_x[x] if t[0] < entry[1]], reverse=True)
        for group in (ups, downs):
            if not group:
                continue
            dev.tracker.set_state(entry_state)
            chain = [entry] + [(x, h) for h, _ in group]
            vals = dev.develop_chain(chain)
            for (h, tag), v in zip(group, vals[1:]):
                value = entry_val + v
                samples[(x, round(h, 12))] = value
                if tag[0] == "boundary":
                    # first-order extrapolation across the ring offset:
                    # d(f2)/dh = tau2/(2*pi), smooth up to the elliptic edge
                    lo, hi = diagram.fiber_interval(x)
                    _, t2_here = dev.tracker.evaluate((x, h))
                    if tag[1] == "lo":
                        edge_val = value - (h - lo) * t2_here / TWO_PI
                    else:
                        edge_val = value + (hi - h) * t2_here / TWO_PI
                    rec = boundary_images.setdefault(x, {})
                    rec[tag[1]] = edge_val
                    boundary_cloud.append((x, edge_val))

    # loop-closure defect on a rectangle inside the cut complement
    loop_residual = 0.0
    if check_loops:
        loop_residual = _rectangle_defect(dev, diagram, base)

    polygon = snap_polygon(boundary_cloud, max_denominator=max_denominator,
                           snap_tol=snap_tol)
    # record which sides are window truncations of a non-compact image
    j0, j1 = diagram.window[0], diagram.window[1]
    eps = 1e-6 * (j1 - j0)
    w_lo = snap_value(min(c[0] for c in boundary_cloud), snap_tol) \
        if diagram.fiber_interval(j0 + eps) is not None else None
    w_hi = snap_value(max(c[0] for c in boundary_cloud), snap_tol) \
        if diagram.fiber_interval(j1 - eps) is not None else None
    if w_lo is not None or w_hi is not None:
        lo_x, hi_x = polygon.x_range()
        polygon = RationalPolygon(
            polygon.vertices,
            window=(w_lo if w_lo is not None else lo_x,
                    w_hi if w_hi is not None else hi_x))

    cut_images = [
        _develop_to_ff(dev, corridor, corr_y, ff, s)
        for ff, s in zip(diagram.focus_focus_values, cut_signs)]

    cuts = tuple((snap_value(x_i, 5e-3), s)
                 for (x_i, _), s in zip(diagram.focus_focus_values, cut_signs))
    weighted = WeightedPolygon(polygon, cuts)
    return DevelopingMap(
        cut_signs=tuple(int(s) for s in cut_signs), base_point=base,
        samples=samples, polygon=polygon, weighted=weighted, diagram=diagram,
        cut_images=cut_images, boundary_images=boundary_images,
        loop_residual=loop_residual, corridor=corridor, developer=dev)


def _rectangle_defect(dev, diagram, base):
    """Development defect around a closed rectangle avoiding all cuts."""
    j0 = base[0]
    if diagram.fiber_interval(j0) is None:
        return math.nan
    dx = 0.12 * (diagram.window[1] - diagram.window[0])
    for _ in range(8):
        js = np.linspace(j0, j0 + dx, 9)
        intervals = [diagram.fiber_interval(j) for j in js]
        if all(iv is not None for iv in intervals):
            lo = max(iv[0] for iv in intervals)
            hi = min(iv[1] for iv in intervals)
            y_mid = dev.corridor_height(j0)
            dy = 0.12 * (hi - lo)
            y_bot, y_top = y_mid - dy, y_mid + dy
            if lo + 0.02 * (hi - lo) < y_bot and y_top < hi - 0.02 * (hi - lo):
                corners = [(j0, y_bot), (j0 + dx, y_bot),
                           (j0 + dx, y_top), (j0, y_top)]
                segs = list(zip(corners, corners[1:] + corners[:1]))
                if not any(dev._crosses_cut(*seg) for seg in segs):
                    dev.tracker.restart()
                    vals = dev.develop_chain(
                        corners + [corners[0]])
                    dev.tracker.restart()
                    return abs(vals[-1])
        dx *= 0.6
    return math.nan


def _develop_to_ff(dev, corridor, corr_y, ff_value, sign,
                   radii=(4e-3, 2e-3, 1e-3)):
    """Developed ordinate of a focus-focus value, approached radially.

    The approach is from the side opposite the cut.  The image behaves as
    v0 + a*r + b*r*ln(r) in the approach radius (tau2 is logarithmic), so
    a three-point fit in that basis removes the singular error terms.
    """
    x_i, y_i = ff_value
    xs = sorted(corridor)
    x_near = min(xs, key=lambda x: abs(x - x_i))
    entry_val, entry_state = corridor[x_near]
    entry = (x_near, corr_y[x_near])
    vals = []
    for r in radii:
        dev.tracker.set_state(entry_state)
        chain = [entry, (x_i, entry[1]), (x_i, y_i - sign * r)]
        out = dev.develop_chain(chain)
        vals.append(entry_val + out[-1])
    basis = np.array([[1.0, r, r * math.log(r)] for r in radii])
    coef, *_ = np.linalg.lstsq(basis, np.array(vals), rcond=None)
    return float(coef[0])
