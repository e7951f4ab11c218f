"""The five symplectic invariants of a simple semitoric system.

The focus-focus local data is extracted without constructing any normal
form: the quadratic pencil at the singular point supplies the local
straightening (J stays the first coordinate exactly; the second is scaled
by the hyperbolic rate of the linearization), the period lattice supplies
tau1 and tau2 on shrinking circles, and subtracting the logarithm of the
straightened value leaves the smooth regularized quantities whose value at
the singularity is the linear part of the classifying Taylor series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .critical import classify_critical_point, is_semitoric, restricted_hessian
from .dynamics import find_point_on_fiber, torus_period_basis
from .errors import ConsistencyError, NotSemitoricError, ResolutionError
from .fibration import bifurcation_diagram, develop_affine
from .polygons import canonical_weighted_class, validate_ingredients
from .systems import DEFAULT_TOL

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Focus-focus local frame
# ---------------------------------------------------------------------------

@dataclass
class FocusFocusFrame:
    """Quadratic data of a focus-focus point in flow-generator form.

    ``alpha`` and ``beta`` are the coefficients of the decomposition of
    the H-linearization over the J-rotation and the radial generator
    (beta > 0); the straightened local value is z1 = c1 - j_i,
    z2 = (c2 - h_i - alpha*z1)/beta.
    """

    record: object
    alpha: float
    beta: float

    @property
    def value(self):
        return self.record.value

    def straighten(self, c):
        d1 = c[0] - self.value[0]
        d2 = c[1] - self.value[1]
        return (d1, (d2 - self.alpha * d1) / self.beta)

    def unstraighten(self, z):
        return (self.value[0] + z[0],
                self.value[1] + self.alpha * z[0] + self.beta * z[1])


def focus_focus_frame(system, record):
    """Build the local straightening from the Hessian pencil at m_i.

    A generic pencil combination separates the joint eigenvectors even
    when the H-linearization alone has repeated eigenvalues; Rayleigh
    quotients on one of them read off the rotation and radial rates.
    """
    coords = record.point.array
    q_j, basis = restricted_hessian(system, "J", coords)
    q_h, _ = restricted_hessian(system, "H", coords)
    omega = basis.T @ system.manifold.omega_matrix(coords) @ basis
    lin_j = -np.linalg.solve(omega, q_j)
    lin_h = -np.linalg.solve(omega, q_h)
    t = math.sqrt(2.0) - 1.0
    eigvals, eigvecs = np.linalg.eig(lin_j + t * lin_h)
    idx = int(np.argmax(eigvals.real))
    w = eigvecs[:, idx]
    nu = (np.conj(w) @ (lin_j @ w)) / (np.conj(w) @ w)
    mu = (np.conj(w) @ (lin_h @ w)) / (np.conj(w) @ w)
    if abs(nu.real) > 0.1 or abs(abs(nu.imag) - 1.0) > 0.1:
        raise ResolutionError(
            f"J-linearization eigenvalue {nu:.3f} is not a unit rotation; "
            "is J the 2*pi-periodic circle action?")
    if abs(mu.real) < 1e-10:
        raise ResolutionError("focus-focus linearization has no radial "
                              "rate; point may be degenerate")
    beta = abs(float(mu.real))
    alpha = float(mu.imag) / float(nu.imag)
    return FocusFocusFrame(record=record, alpha=alpha, beta=beta)


# ---------------------------------------------------------------------------
# Taylor linear invariant
# ---------------------------------------------------------------------------

@dataclass
class TaylorLinearData:
    """Linear coefficients of the regularized action at one singularity.

    ``sigma1`` is the transversal (logarithmic) regularization constant,
    the X-coefficient of the classifying linear map; ``sigma2`` is the
    angular constant referenced to the cut direction, reported in the
    orientation that makes the tau1 winding +1, and lies in [0, 2*pi).
    ``angular0`` keeps the plain-argument angular constant in this
    package's own orientation for branch reconstruction.
    """

    sigma1: float
    sigma2: float
    winding: int
    angular0: float
    frame: FocusFocusFrame
    cut_sign: int
    per_radius: list

    @property
    def pair(self):
        return (self.sigma1, self.sigma2)

    def local_tau1(self, z):
        """The locally privileged tau1 lift at straightened value z.

        The branch starts at the cut direction and runs once around in
        the winding direction; the regularized angular part is smooth, so
        near the singular value the lift is the angular constant plus the
        winding times the branch angle.
        """
        theta_cut = 0.5 * math.pi * self.cut_sign
        theta = math.atan2(z[1], z[0])
        u = (self.winding * (theta - theta_cut)) % TWO_PI
        return self.angular0 + self.winding * theta_cut + u


def _circle_tau_phi(system, frame, r, n_points, cut_sign, tol):
    """tau1_Phi, tau2_Phi on the circle |z| = r, branch-tracked from the cut.

    Returns (thetas, tau1_phi, tau2_phi, winding); thetas start just past
    the cut direction and increase by 2*pi.
    """
    theta_cut = 0.5 * math.pi * cut_sign
    thetas = theta_cut + (np.arange(n_points) + 0.5) * TWO_PI / n_points
    t1_raw = np.empty(n_points)
    t2_raw = np.empty(n_points)
    state = None
    for k, th in enumerate(thetas):
        z = (r * math.cos(th), r * math.sin(th))
        c = frame.unstraighten(z)
        if state is None:
            lat = torus_period_basis(system, c, tol=tol)
            t1, t2 = lat.tau1_raw, lat.tau2
        else:
            seed = find_point_on_fiber(system, c, start=state[2].array)
            lat = torus_period_basis(system, c, seed=seed,
                                     guess=(state[0], state[1]), tol=tol)
            t1, t2 = lat.tau1_raw, lat.tau2
        state = (t1, t2, lat.seed)
        t1_raw[k], t2_raw[k] = t1, t2
    tau2_phi = frame.beta * t2_raw
    tau1_phi = t1_raw + frame.alpha * t2_raw
    # one more tracked point back at the start closes the loop
    z0 = (r * math.cos(thetas[0]), r * math.sin(thetas[0]))
    seed = find_point_on_fiber(system, frame.unstraighten(z0),
                               start=state[2].array)
    lat = torus_period_basis(system, frame.unstraighten(z0), seed=seed,
                             guess=(state[0], state[1]), tol=tol)
    winding_f = ((lat.tau1_raw + frame.alpha * lat.tau2) - tau1_phi[0]) / TWO_PI
    winding = int(round(winding_f))
    if abs(winding_f - winding) > 0.05 or abs(winding) != 1:
        raise ResolutionError(
            f"tau1 winding {winding_f:.3f} around the focus-focus value "
            "is not +-1; refine the circle")
    return thetas, tau1_phi, tau2_phi, winding


def taylor_linear_invariant(system, record_or_value, cut_sign=+1, r0=0.08,
                            n_points=16, tol=None, region=None):
    """Linear coefficients (sigma1(0), sigma2(0)) of the regularized action.

    tau1 and tau2 are measured on four shrinking circles around the
    focus-focus value in the straightened coordinates; the logarithmic
    singularity is subtracted with the branch cut along the chosen sign
    direction, and the circle averages are extrapolated to radius zero.
    """
    tol = tol if tol is not None else 1e-10
    record = _resolve_record(system, record_or_value, region)
    frame = focus_focus_frame(system, record)
    radii = [r0, r0 / 2, r0 / 4, r0 / 8]
    log_list, ang_list = [], []
    winding = None
    for r in radii:
        thetas, tau1_phi, tau2_phi, wind = _circle_tau_phi(
            system, frame, r, n_points, cut_sign, tol)
        if winding is None:
            winding = wind
        elif wind != winding:
            raise ResolutionError("tau1 winding changed between radii")
        # plain-argument angular constant and logarithmic constant;
        # circle averaging kills the odd (linear) terms
        ang = tau1_phi - winding * thetas
        log_part = tau2_phi + math.log(r)
        ang_list.append(float(np.mean(ang)))
        log_list.append(float(np.mean(log_part)))

    def extrapolate(vals):
        basis = np.array([[1.0, r, r * r] for r in radii])
        coef, *_ = np.linalg.lstsq(basis, np.array(vals), rcond=None)
        return float(coef[0])

    for vals in (log_list, ang_list):
        spread = abs(vals[-1] - vals[-2])
        scale = max(1.0, abs(vals[-1]))
        if spread > 0.05 * scale:
            raise ResolutionError(
                f"sigma estimates not converging ({vals}); decrease r0")
    theta_cut = 0.5 * math.pi * cut_sign
    angular0 = extrapolate(ang_list) % TWO_PI
    # the cut-referenced angular constant, reported in the orientation
    # with tau1 winding +1 (the convention of the classifying series)
    sigma2 = (winding * angular0 + theta_cut) % TWO_PI
    sigma1 = extrapolate(log_list)
    return TaylorLinearData(sigma1=sigma1, sigma2=sigma2, winding=winding,
                            angular0=angular0, frame=frame,
                            cut_sign=int(cut_sign),
                            per_radius=list(zip(radii, log_list, ang_list)))


def _resolve_record(system, record_or_value, region):
    if hasattr(record_or_value, "williamson"):
        record = record_or_value
    else:
        c = tuple(record_or_value)
        if region is None:
            region = (c[0] - 1.0, c[0] + 1.0, c[1] - 1.0, c[1] + 1.0)
        from .critical import find_critical_points

        recs = [r for r in find_critical_points(system, region=region)
                if r.is_focus_focus]
        if not recs:
            raise ResolutionError(f"no focus-focus point near {c}")
        record = min(recs, key=lambda r: (r.value[0] - c[0]) ** 2
                     + (r.value[1] - c[1]) ** 2)
    if not record.is_focus_focus:
        raise ResolutionError("critical point is not focus-focus")
    return record


# ---------------------------------------------------------------------------
# Height (volume) invariant
# ---------------------------------------------------------------------------

@dataclass
class HeightData:
    height: float
    mc_estimate: float
    mc_sigma: float
    polygon_estimate: float

    @property
    def consistent(self):
        return abs(self.mc_estimate - self.polygon_estimate) \
            <= 3.0 * self.mc_sigma + 5e-3


def _liouville_cloud(system, rng, n, scale):
    """Uniform Liouville-measure sample cloud and its total measure."""
    name = system.manifold.name
    if name == "s2xr2":
        q = rng.normal(size=(3, n))
        q /= np.linalg.norm(q, axis=0)
        r = scale * np.sqrt(rng.uniform(size=n))
        t = rng.uniform(0.0, TWO_PI, size=n)
        pts = np.vstack([q, r * np.cos(t), r * np.sin(t)])
        measure = 4.0 * math.pi * math.pi * scale ** 2
        return pts, measure
    if name == "s2xs2":
        q1 = rng.normal(size=(3, n))
        q1 /= np.linalg.norm(q1, axis=0)
        q2 = rng.normal(size=(3, n))
        q2 /= np.linalg.norm(q2, axis=0)
        return np.vstack([q1, q2]), (4.0 * math.pi) ** 2
    raise ConsistencyError(
        f"no Liouville sampler for manifold {name!r}")


def _batch_values(field, pts):
    try:
        vals = field._value(pts)  # analytic closures broadcast columnwise
        if np.shape(vals) == (pts.shape[1],):
            return np.asarray(vals, float)
    except Exception:
        pass
    return np.array([field.value(pts[:, k]) for k in range(pts.shape[1])])


def height_invariant(system, record_or_value, developing_map=None,
                     n_samples=1_000_000, shell=0.04, seed=1234,
                     region=None):
    """Liouville volume below the focus-focus level, by two routes.

    (a) Monte Carlo over the slab |J - j_i| < shell/2 with the flat
    Liouville measure, normalized by (2*pi)^2; (b) the vertical distance
    between the developed focus-focus image and the bottom boundary image.
    The two must agree within the 3-sigma Monte Carlo bound.
    """
    record = _resolve_record(system, record_or_value, region)
    j_i, h_i = record.value
    rng = np.random.default_rng(seed)
    scale = math.sqrt(2.0 * (j_i + 1.0)) + 1.0
    pts, measure = _liouville_cloud(system, rng, int(n_samples), scale)
    j_vals = _batch_values(system.j_field, pts)
    h_vals = _batch_values(system.h_field, pts)
    hit = (np.abs(j_vals - j_i) < 0.5 * shell) & (h_vals < h_i)
    frac = np.mean(hit)
    norm = measure / (shell * TWO_PI ** 2)
    mc = float(frac * norm)
    sigma = float(math.sqrt(max(frac * (1 - frac), 1e-12) / n_samples) * norm)

    poly = math.nan
    if developing_map is not None:
        idx = _nearest_ff_index(developing_map, (j_i, h_i))
        mu_val = developing_map.cut_images[idx]
        poly = mu_val - _bottom_image(developing_map, j_i)
    data = HeightData(height=mc if math.isnan(poly) else poly,
                      mc_estimate=mc, mc_sigma=sigma, polygon_estimate=poly)
    if not math.isnan(poly) and not data.consistent:
        raise ConsistencyError(
            f"height methods disagree: MC {mc:.4f} +- {sigma:.4f} vs "
            f"polygon {poly:.4f}")
    return data


def _nearest_ff_index(dm, value):
    ffs = dm.diagram.focus_focus_values
    return min(range(len(ffs)),
               key=lambda i: (ffs[i][0] - value[0]) ** 2
               + (ffs[i][1] - value[1]) ** 2)


def _bottom_image(dm, x):
    xs = sorted(j for j, rec in dm.boundary_images.items() if "lo" in rec)
    if not xs:
        raise ConsistencyError("no developed bottom boundary available")
    lo_vals = {j: dm.boundary_images[j]["lo"] for j in xs}
    if x <= xs[0]:
        return lo_vals[xs[0]]
    if x >= xs[-1]:
        return lo_vals[xs[-1]]
    import bisect

    k = bisect.bisect_left(xs, x)
    x0, x1 = xs[k - 1], xs[k]
    t = (x - x0) / (x1 - x0)
    return (1 - t) * lo_vals[x0] + t * lo_vals[x1]


# ---------------------------------------------------------------------------
# Twisting indices
# ---------------------------------------------------------------------------

def twisting_indices(system, developing_map, taylor_data=None, rho=0.06,
                     tol=None):
    """Integer comparison of the developed map against the privileged map.

    Both momentum maps share tau2; their tau1 lifts differ by an integer
    multiple of 2*pi, recovered at probe points on the anti-cut side of
    each focus-focus value and rounded with a residual bound of 0.05.
    """
    dm = developing_map
    out = []
    for i, ((x_i, y_i), s) in enumerate(zip(dm.diagram.focus_focus_values,
                                            dm.cut_signs)):
        td = None
        if taylor_data is not None:
            td = taylor_data[i]
        if td is None or td.cut_sign != s:
            td = taylor_linear_invariant(
                system, _resolve_record(system, (x_i, y_i),
                                        dm.diagram.window),
                cut_sign=s, tol=tol)
        frame = td.frame
        k_floats = []
        for ang_off in (-0.5, 0.0, 0.5):
            # anti-cut direction in straightened coordinates
            theta = -0.5 * math.pi * s + ang_off
            z = (rho * math.cos(theta), rho * math.sin(theta))
            c = frame.unstraighten(z)
            t1_global, t2_global = dm.tracked_lattice(c)
            tau1_phi = t1_global + frame.alpha * t2_global
            tau1_local = td.local_tau1(z)
            k_floats.append((tau1_phi - tau1_local) / TWO_PI)
        k_mean = float(np.mean(k_floats))
        k = int(round(k_mean))
        residual = max(abs(f - k) for f in k_floats)
        if residual > 0.05:
            raise ResolutionError(
                f"twisting index residual {residual:.3f} at c_{i}; "
                "branch tracking suspect")
        out.append(k)
    return out


# ---------------------------------------------------------------------------
# Full invariant record
# ---------------------------------------------------------------------------

@dataclass
class SemitoricInvariants:
    m_f: int
    taylor_linear: list
    heights: list
    polygon_class: object
    twisting: list
    representative: object
    details: dict

    def to_dict(self):
        wp, log = self.polygon_class
        return {
            "m_f": self.m_f,
            "taylor_linear": [list(t.pair) for t in self.taylor_linear],
            "heights": [h.height for h in self.heights],
            "heights_mc": [[h.mc_estimate, h.mc_sigma] for h in self.heights],
            "polygon_class": wp.to_json_dict(),
            "twisting": list(self.twisting),
            "representative": self.representative.to_json_dict(),
        }


def semitoric_invariants(system, window=(-2.0, 2.0, -2.0, 2.0),
                         resolution=40, cut_signs=None, tol=None,
                         mc_samples=1_000_000, seed=1234):
    """Assemble all five invariants; refuses non-semitoric systems."""
    ok, certificate = is_semitoric(system, region=window)
    if not ok:
        raise NotSemitoricError("system fails the semitoric gate",
                                certificate=certificate["reasons"])
    diagram = bifurcation_diagram(system, window, resolution=resolution,
                                  records=certificate["records"])
    m_f = diagram.m_f
    if cut_signs is None:
        cut_signs = tuple([+1] * m_f)
    dm = develop_affine(system, diagram, cut_signs, tol=tol)
    taylor = [taylor_linear_invariant(system, _resolve_record(
        system, ff, window), cut_sign=s, tol=tol)
        for ff, s in zip(diagram.focus_focus_values, cut_signs)]
    heights = [height_invariant(system, _resolve_record(system, ff, window),
                                developing_map=dm, n_samples=mc_samples,
                                seed=seed)
               for ff in diagram.focus_focus_values]
    twisting = twisting_indices(system, dm, taylor_data=taylor, tol=tol)
    weighted = dm.weighted
    if m_f:
        weighted = type(weighted)(weighted.polygon, weighted.cuts,
                                  tuple(twisting))
    canonical = canonical_weighted_class(weighted)
    valid, reasons = validate_ingredients(
        m_f, [t.pair for t in taylor], canonical[0],
        [h.height for h in heights],
        list(canonical[0].twisting) if canonical[0].twisting else
        ([] if m_f == 0 else None))
    return SemitoricInvariants(
        m_f=m_f, taylor_linear=taylor, heights=heights,
        polygon_class=canonical, twisting=twisting, representative=weighted,
        details={"diagram": diagram, "developing_map": dm,
                 "ingredients_valid": valid, "ingredient_reasons": reasons})
