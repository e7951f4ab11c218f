"""Flow integration, return maps, and period lattices of Liouville tori.

The integrator is adaptive high-order Runge-Kutta (DOP853) with dense
output; symplecticity is monitored through conservation drift rather than
enforced, since the focus-focus neighborhoods need adaptivity more than
long-time structure preservation.  Sphere factors are renormalized on
output points.

The period lattice of a regular torus is found by two-dimensional
shooting on the closure condition phi_J^t1(phi_H^t2(seed)) = seed; the
commutation of the flows makes the shooting Jacobian just the pair of
vector fields at the endpoint, so Gauss-Newton converges quadratically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    DegenerateTorusError,
    IntegrationFailureError,
    NonCompactFiberError,
)
from .systems import DEFAULT_TOL, PhasePoint

TWO_PI = 2.0 * math.pi


@dataclass
class FlowResult:
    endpoint: PhasePoint
    elapsed: float
    conservation_drift: float


@dataclass
class PeriodLattice:
    """Closing-time lattice rows for the torus over a regular value.

    ``basis`` rows are (2*pi, 0) and (tau1, tau2) with tau2 > 0 and tau1
    normalized to [0, 2*pi); ``tau1_raw`` keeps the un-normalized branch
    for continuous transport.
    """

    value: tuple
    basis: np.ndarray
    residual: float
    tau1_raw: float
    seed: PhasePoint

    @property
    def tau1(self):
        return self.basis[1, 0]

    @property
    def tau2(self):
        return self.basis[1, 1]


def _combination(system, which):
    if which == "J":
        return ((1.0, 0.0), f"{system.name}:J")
    if which == "H":
        return ((0.0, 1.0), f"{system.name}:H")
    a, b = which
    return ((float(a), float(b)), f"{system.name}:{a}J+{b}H")


def _rhs(system, a, b):
    manifold = system.manifold
    j_grad = system.j_field.gradient
    h_grad = system.h_field.gradient

    def rhs(t, p):
        return manifold.ham_vector(p, a * j_grad(p) + b * h_grad(p))

    return rhs


def _integrate(system, a, b, coords, t, tol, events=None, dense=False):
    if t == 0.0:
        return None
    sol = solve_ivp(_rhs(system, a, b), (0.0, t), np.asarray(coords, float),
                    method="DOP853", rtol=tol, atol=tol,
                    events=events, dense_output=dense)
    if not sol.success and sol.status != 1:
        raise IntegrationFailureError(
            f"integration stalled at t={sol.t[-1]:.6g}: {sol.message}",
            partial=sol)
    return sol


def flow(system, which, point, t, tol=None):
    """Flow ``point`` for time ``t`` along J, H, or a combination (a, b)."""
    tol = tol if tol is not None else DEFAULT_TOL.flow
    system.check_point(point)
    (a, b), _ = _combination(system, which)
    p0 = point.array
    f0 = system.f_value(p0)
    if t == 0.0:
        return FlowResult(point, 0.0, 0.0)
    sol = _integrate(system, a, b, p0, t, tol, dense=True)
    # drift monitored on up to 64 interior samples of the dense output
    ts = np.linspace(0.0, t, min(64, max(8, sol.t.size)))
    drift = 0.0
    for s in ts:
        drift = max(drift, np.max(np.abs(system.f_value(sol.sol(s)) - f0)))
    endpoint = system.manifold.project(sol.y[:, -1])
    return FlowResult(system.point(tuple(endpoint)), t, float(drift))


def flow_to_csv(system, which, point, t, path, samples=200, tol=None):
    """Write the trajectory as CSV rows (t, coords..., J, H)."""
    tol = tol if tol is not None else DEFAULT_TOL.flow
    (a, b), _ = _combination(system, which)
    sol = _integrate(system, a, b, point.array, t, tol, dense=True)
    ts = np.linspace(0.0, t, samples)
    names = ",".join(system.manifold.coord_names)
    with open(path, "w") as fh:
        fh.write(f"t,{names},J,H\n")
        for s in ts:
            p = system.manifold.project(sol.sol(s))
            j, h = system.f_value(p)
            row = ",".join(f"{x:.12g}" for x in p)
            fh.write(f"{s:.12g},{row},{j:.12g},{h:.12g}\n")


def first_return_map(system, section, point, tol=None, time_budget=200.0,
                     which="H"):
    """First crossing of an affine section with matching orientation.

    ``section`` is (normal, base) in ambient coordinates; when None, the
    hyperplane through ``point`` normal to the flow direction is used and
    re-chosen would-be-tangential crossings are rejected by orientation.
    """
    tol = tol if tol is not None else DEFAULT_TOL.flow
    system.check_point(point)
    (a, b), _ = _combination(system, which)
    p0 = point.array
    v0 = system.manifold.ham_vector(
        p0, a * system.j_field.gradient(p0) + b * system.h_field.gradient(p0))
    if section is None:
        normal, base = v0 / np.linalg.norm(v0), p0
    else:
        normal, base = (np.asarray(section[0], float),
                        np.asarray(section[1], float))
    orient = math.copysign(1.0, float(normal @ v0))

    def crossing(t, p):
        return float(normal @ (p - base))

    crossing.direction = orient
    crossing.terminal = True

    # short kick past the section so the t=0 crossing does not retrigger
    speed = np.linalg.norm(v0)
    t_kick = min(1e-3, 1e-3 / max(speed, 1e-12))
    sol0 = _integrate(system, a, b, p0, t_kick, tol)
    sol = _integrate(system, a, b, sol0.y[:, -1], time_budget, tol,
                     events=crossing)
    if sol.status != 1 or len(sol.t_events[0]) == 0:
        raise NonCompactFiberError(
            f"no section return within time budget {time_budget}")
    t_ret = float(sol.t_events[0][0]) + t_kick
    endpoint = system.manifold.project(sol.y_events[0][0])
    return system.point(tuple(endpoint)), t_ret


def find_point_on_fiber(system, c, start=None, tol=1e-9, seed=0, tries=40,
                        scale=1.5):
    """Locate a phase point with F(p) = c by damped Gauss-Newton."""
    manifold = system.manifold
    target = np.asarray(c, float)
    rng = np.random.default_rng(seed)

    def refine(p):
        p = manifold.project(np.asarray(p, float))
        for _ in range(60):
            r = system.f_value(p) - target
            if np.linalg.norm(r) < tol:
                return p
            basis = manifold.tangent_basis(p)
            df = np.vstack([system.j_field.gradient(p) @ basis,
                            system.h_field.gradient(p) @ basis])
            step, *_ = np.linalg.lstsq(df, -r, rcond=None)
            if not np.all(np.isfinite(step)):
                return None
            nstep = np.linalg.norm(step)
            if nstep > 0.5:
                step *= 0.5 / nstep
            p = manifold.project(p + basis @ step)
        return None

    candidates = [start] if start is not None else []
    candidates += [manifold.random_point(rng, scale=scale) for _ in range(tries)]
    for cand in candidates:
        if cand is None:
            continue
        p = refine(cand)
        if p is not None:
            return system.point(tuple(p))
    raise DegenerateTorusError(f"could not reach fiber over c={tuple(target)}")


def _j_orbit_samples(system, coords, tol, n=256):
    sol = _integrate(system, 1.0, 0.0, coords, TWO_PI, tol, dense=True)
    ts = np.linspace(0.0, TWO_PI, n, endpoint=False)
    pts = sol.sol(ts).T
    closure = np.linalg.norm(sol.y[:, -1] - coords)
    return ts, pts, closure


class _HFlowCache:
    """Dense H-flow from a fixed start, extended in chunks on demand."""

    def __init__(self, system, coords, tol, chunk=40.0):
        self.system, self.tol, self.chunk = system, tol, chunk
        self.start = np.asarray(coords, float)
        self.chunks = []  # (t_start, sol)
        self.t_end = 0.0

    def extend(self, until):
        while self.t_end < until:
            base = self.chunks[-1][1].y[:, -1] if self.chunks else self.start
            sol = _integrate(self.system, 0.0, 1.0, base, self.chunk,
                             self.tol, dense=True)
            self.chunks.append((self.t_end, sol))
            self.t_end += self.chunk

    def eval(self, t):
        self.extend(t)
        for t0, sol in reversed(self.chunks):
            if t >= t0 - 1e-12:
                return sol.sol(min(t - t0, self.chunk))
        return sol.sol(0.0)


def _closure_newton(system, seed_coords, h_flow, t1, t2, tol, max_iter=14,
                    t2_min=0.0):
    """Gauss-Newton on (t1, t2) for phi_J^t1(phi_H^t2(seed)) = seed.

    ``t2_min`` excludes the trivial closure at (0, 0), which is always a
    solution and a Newton attractor.
    """
    manifold = system.manifold
    best = None
    for _ in range(max_iter):
        if t2 <= t2_min:
            return best
        mid = h_flow.eval(t2)
        solj = _integrate(system, 1.0, 0.0, mid, t1, tol, dense=False) \
            if t1 != 0.0 else None
        end = manifold.project(solj.y[:, -1] if solj is not None else mid)
        resid = end - seed_coords
        err = np.linalg.norm(resid)
        if best is None or err < best[0]:
            best = (err, t1, t2)
        if err < 1e-12:
            break
        xj = manifold.ham_vector(end, system.j_field.gradient(end))
        xh = manifold.ham_vector(end, system.h_field.gradient(end))
        jac = np.stack([xj, xh], axis=1)
        step, *_ = np.linalg.lstsq(jac, -resid, rcond=None)
        if not np.all(np.isfinite(step)):
            return best
        limit = 0.2 * max(1.0, abs(t2))
        norm = np.linalg.norm(step)
        if norm > limit:
            step *= limit / norm
        t1, t2 = t1 + step[0], t2 + step[1]
    return best


def torus_period_basis(system, c, seed=None, guess=None, tol=None,
                       residual_tol=None, time_budget=400.0, verify=False):
    """Closing-time lattice of the Liouville torus over the regular value c.

    ``guess=(t1, t2)`` warm-starts the shooting and preserves the tau1
    branch, which is what continuous transport along paths of values needs.
    """
    tol = tol if tol is not None else DEFAULT_TOL.flow
    residual_tol = residual_tol if residual_tol is not None \
        else DEFAULT_TOL.lattice_residual
    if seed is None:
        seed = find_point_on_fiber(system, c)
    else:
        system.check_point(seed)
    seed_coords = seed.array

    chunk = 40.0 if guess is None else min(40.0, max(2.0, 1.3 * guess[1]))
    h_flow = _HFlowCache(system, seed_coords, tol, chunk=chunk)
    solutions = []
    if guess is not None:
        got = _closure_newton(system, seed_coords, h_flow, guess[0], guess[1],
                              tol, t2_min=0.25 * guess[1])
        if got and got[0] < residual_tol:
            solutions.append(got)

    if not solutions:
        ts_orbit, orbit_pts, closure = _j_orbit_samples(system, seed_coords, tol)
        if closure > 1e-6:
            raise DegenerateTorusError(
                f"J-flow does not close after 2*pi (residual {closure:.2e}); "
                "is J a 2*pi-periodic circle action?")
        tube = 3.0 * np.max(np.linalg.norm(np.diff(orbit_pts, axis=0), axis=1))
        dt = 0.02
        adapt_after = min(10.0, 0.25 * time_budget)
        buf_t, buf_d = [], []
        t_scan, t_leave = dt, None
        tried = set()
        best_min = math.inf
        while t_scan < time_budget and not solutions:
            t_hi = min(t_scan + h_flow.chunk, time_budget)
            ts = np.arange(t_scan, t_hi, dt)
            h_flow.extend(t_hi)
            buf_t.append(ts)
            buf_d.append(np.min(np.linalg.norm(
                np.stack([h_flow.eval(s) for s in ts])[:, None, :]
                - orbit_pts[None, :, :], axis=2), axis=1))
            t_all = np.concatenate(buf_t)
            d_all = np.concatenate(buf_d)
            if t_leave is None:
                away = np.nonzero(d_all > 2.0 * tube)[0]
                if len(away) == 0 and t_hi > adapt_after and d_all.max() > 0:
                    # thin torus near an elliptic edge: the trajectory never
                    # leaves the naive orbit tube, so shrink it adaptively
                    tube = 0.3 * float(d_all.max())
                    away = np.nonzero(d_all > 2.0 * tube)[0]
                if len(away) == 0:
                    t_scan = t_hi
                    continue
                t_leave = t_all[away[0]]
            interior = (d_all[1:-1] < d_all[:-2]) & (d_all[1:-1] <= d_all[2:])
            minima = [k + 1 for k in np.nonzero(interior)[0]
                      if d_all[k + 1] < 4.0 * tube
                      and t_all[k + 1] > t_leave and k + 1 not in tried]
            best_min = min([best_min] + [d_all[k] for k in minima])
            for k in minima:
                tried.add(k)
                t2 = t_all[k]
                near = int(np.argmin(np.linalg.norm(
                    orbit_pts - h_flow.eval(t2)[None, :], axis=1)))
                t1 = (TWO_PI - ts_orbit[near]) % TWO_PI
                got = _closure_newton(system, seed_coords, h_flow, t1, t2,
                                      tol, t2_min=t_leave)
                if got and got[0] < residual_tol:
                    solutions.append(got)
                    break
            t_scan = t_hi
        if not solutions:
            if math.isfinite(best_min):
                raise DegenerateTorusError(
                    f"shooting did not converge at "
                    f"c={tuple(np.asarray(c, float))}; best approach "
                    f"{best_min:.2e}")
            raise NonCompactFiberError(
                f"H-flow found no return to the circle orbit within "
                f"t={time_budget}")

    err, t1, t2 = min(solutions, key=lambda s: s[0])
    tau1_raw = t1 if guess is not None else t1 % TWO_PI
    basis = np.array([[TWO_PI, 0.0], [tau1_raw % TWO_PI, t2]])
    lattice = PeriodLattice(value=tuple(np.asarray(c, float)), basis=basis,
                            residual=float(err), tau1_raw=float(tau1_raw),
                            seed=seed)

    if verify:
        other = find_point_on_fiber(system, c, seed=7)
        second = torus_period_basis(system, c, seed=other, tol=tol,
                                    residual_tol=residual_tol,
                                    time_budget=time_budget)
        dev = max(abs(second.tau2 - lattice.tau2),
                  abs((second.tau1 - lattice.tau1 + math.pi) % TWO_PI - math.pi))
        if dev > 1e-6:
            raise DegenerateTorusError(
                f"lattice depends on seed: deviation {dev:.2e}")
    return lattice
