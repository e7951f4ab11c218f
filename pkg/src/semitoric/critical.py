"""Critical points of the momentum map and their Williamson types.

Rank-0 points are zeros of both tangential gradients, found by damped
Gauss-Newton from a deterministic seed cloud.  Classification works on the
matrix pencil a*Q_J + b*Q_H of constraint-corrected Hessians against the
symplectic pairing on the tangent space: the eigenvalue pattern of
Omega^-1 A distinguishes elliptic, hyperbolic and focus-focus blocks, and
non-degeneracy is certified by keeping the spectrum away from zero and
from collisions while (a, b) is perturbed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .systems import DEFAULT_TOL, PhasePoint

# deterministic generic combination; second direction used on collision
GENERIC_AB = (1.0, math.sqrt(2.0) - 1.0)
RETRY_AB = (1.0, 1.0 / math.sqrt(3.0))


@dataclass
class CriticalPointRecord:
    point: PhasePoint
    rank: int
    williamson: tuple
    nondegenerate: bool
    value: tuple
    eigen_data: tuple
    grad_residual: float

    @property
    def is_focus_focus(self):
        return self.rank == 0 and self.williamson == (0, 0, 1)

    def to_dict(self):
        return {
            "point": list(self.point.coords),
            "rank": self.rank,
            "williamson": list(self.williamson),
            "nondegenerate": self.nondegenerate,
            "value": list(self.value),
            "eigenvalues": [[z.real, z.imag] for z in self.eigen_data],
            "grad_residual": self.grad_residual,
        }


def _tangential_dF(system, coords):
    basis = system.manifold.tangent_basis(coords)
    return np.vstack([system.j_field.gradient(coords) @ basis,
                      system.h_field.gradient(coords) @ basis]), basis


def restricted_hessian(system, which, coords):
    """Hessian of J or H on the tangent space, corrected for constraints.

    At a point where the tangential gradient vanishes, df = sum lam_i dC_i;
    the second fundamental form contribution -lam_i Hess(C_i) makes the
    restriction chart-independent.
    """
    manifold = system.manifold
    grad = system.field(which).gradient(coords)
    hess = system.field(which).hessian(coords)
    cons_grads = manifold.constraint_grads(coords)
    if len(cons_grads):
        lam, *_ = np.linalg.lstsq(cons_grads.T, grad, rcond=None)
        hess = hess - np.tensordot(lam, manifold.constraint_hessians(coords), 1)
    basis = manifold.tangent_basis(coords)
    return basis.T @ hess @ basis, basis


def _pencil_eigenvalues(system, coords, a, b, basis=None):
    q_j, basis = restricted_hessian(system, "J", coords)
    q_h, _ = restricted_hessian(system, "H", coords)
    omega = basis.T @ system.manifold.omega_matrix(coords) @ basis
    lin = np.linalg.solve(omega, a * q_j + b * q_h)
    return np.linalg.eigvals(lin)


def _quadruple_symmetric(eigs, tol):
    for lam in eigs:
        if min(abs(eigs + lam)) > tol or min(abs(eigs - np.conj(lam))) > tol:
            return False
    return True


def _split_pairs(eigs):
    """Group the 4 eigenvalues into 2 pairs {lam, -lam} and return one of each."""
    eigs = sorted(eigs, key=lambda z: (z.real, z.imag))
    used = [False] * 4
    reps = []
    for i in range(4):
        if used[i]:
            continue
        used[i] = True
        j_best, best = None, math.inf
        for j in range(i + 1, 4):
            if not used[j] and abs(eigs[i] + eigs[j]) < best:
                j_best, best = j, abs(eigs[i] + eigs[j])
        if j_best is not None:
            used[j_best] = True
        reps.append(eigs[i])
    return reps


def _classify_rank0(system, coords, tol):
    for (a, b) in (GENERIC_AB, RETRY_AB):
        eigs = _pencil_eigenvalues(system, coords, a, b)
        scale = max(np.max(np.abs(eigs)), 1e-30)
        thr = 1e-6 * scale
        structural = _quadruple_symmetric(eigs, 1e-4 * scale)
        reps = _split_pairs(eigs)
        near_zero = any(abs(z) < thr for z in eigs)
        collision = abs(abs(reps[0]) - abs(reps[1])) < thr and \
            abs(abs(reps[0].real) - abs(reps[1].real)) < thr and \
            abs(abs(reps[0].imag) - abs(reps[1].imag)) < thr
        kinds = []
        for z in reps:
            re, im = abs(z.real), abs(z.imag)
            if re < thr and im >= thr:
                kinds.append("e")
            elif im < thr and re >= thr:
                kinds.append("h")
            elif re >= thr and im >= thr:
                kinds.append("f")
            else:
                kinds.append("0")
        if kinds == ["f", "f"]:
            return (0, 0, 1), structural and not near_zero, tuple(eigs)
        if "0" not in kinds and not collision:
            k_e = kinds.count("e")
            k_h = kinds.count("h")
            return (k_e, k_h, 0), structural and not near_zero, tuple(eigs)
        # collision or zero: perturb (a, b) and retry
    k_e, k_h = kinds.count("e"), kinds.count("h")
    if kinds == ["f", "f"]:
        return (0, 0, 1), False, tuple(eigs)
    return (k_e, k_h, 0), False, tuple(eigs)


def _classify_rank1(system, coords, kernel_ab, tol):
    a, b = kernel_ab
    q_j, basis = restricted_hessian(system, "J", coords)
    q_h, _ = restricted_hessian(system, "H", coords)
    omega = basis.T @ system.manifold.omega_matrix(coords) @ basis
    q_k = a * q_j + b * q_h
    # direction with non-vanishing differential spans the regular flow
    grad_l = -b * system.j_field.gradient(coords) + \
        a * system.h_field.gradient(coords)
    v = system.manifold.ham_vector(coords, grad_l)
    v_b = basis.T @ v
    v_b = v_b / np.linalg.norm(v_b)
    # omega-orthogonal of the flow direction, modulo the flow direction
    functional = omega @ v_b
    space = np.linalg.svd(functional[None, :])[2][1:].T  # 4x3 null basis
    comp = space - np.outer(v_b, v_b @ space)
    u, s, _ = np.linalg.svd(comp)
    e2 = u[:, :2]
    omega2 = e2.T @ omega @ e2
    q2 = e2.T @ q_k @ e2
    lin = np.linalg.solve(omega2, q2)
    det = np.linalg.det(lin)
    eigs = np.linalg.eigvals(lin)
    scale = max(np.max(np.abs(eigs)), 1e-30)
    if abs(det) < 1e-6 * scale ** 2:
        return (0, 0, 0), False, tuple(eigs)
    if det > 0:
        return (1, 0, 0), True, tuple(eigs)
    return (0, 1, 0), True, tuple(eigs)


def classify_critical_point(system, point, tol=None):
    """Williamson type of a critical point of F; see module docstring."""
    tolerances = tol if tol is not None else DEFAULT_TOL
    coords = point.array if isinstance(point, PhasePoint) else np.asarray(point, float)
    coords = system.manifold.project(coords)
    df, _ = _tangential_dF(system, coords)
    sv = np.linalg.svd(df, compute_uv=False)
    scale = max(1.0, sv[0])
    rank = int(np.sum(sv > tolerances.rank_threshold * scale))
    value = tuple(system.f_value(coords))
    pt = system.point(tuple(coords))
    residual = float(sv[rank:].sum()) if rank < 2 else 0.0
    if rank >= 2:
        return CriticalPointRecord(pt, 2, (0, 0, 0), True, value, (), residual)
    if rank == 0:
        will, nondeg, eigs = _classify_rank0(system, coords, tolerances)
    else:
        # left-null vector of dF: the combination a*J + b*H with dK(m) = 0
        kernel_ab = np.linalg.svd(df)[0][:, -1]
        will, nondeg, eigs = _classify_rank1(system, coords, kernel_ab,
                                             tolerances)
    return CriticalPointRecord(pt, rank, will, nondeg, value, eigs, residual)


def _newton_rank0(system, coords, tol, max_iter=60):
    manifold = system.manifold
    p = manifold.project(np.asarray(coords, float))

    def residual(q):
        basis = manifold.tangent_basis(q)
        return np.concatenate([system.j_field.gradient(q) @ basis,
                               system.h_field.gradient(q) @ basis]), basis

    h = 1e-6
    for _ in range(max_iter):
        r, basis = residual(p)
        if np.linalg.norm(r) < tol:
            return p
        jac = np.empty((r.size, 4))
        for k in range(4):
            q = manifold.project(p + h * basis[:, k])
            rk, _ = residual(q)
            jac[:, k] = (rk - r) / h
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        if not np.all(np.isfinite(step)):
            return None
        norm = np.linalg.norm(step)
        if norm > 0.25:
            step *= 0.25 / norm
        p = manifold.project(p + basis @ step)
    return None


def _newton_rank1(system, coords, tol, max_iter=60):
    manifold = system.manifold
    p = manifold.project(np.asarray(coords, float))
    df, basis = _tangential_dF(system, p)
    phi = math.atan2(*np.linalg.svd(df)[0][::-1, -1])

    def residual(q, ang):
        basis = manifold.tangent_basis(q)
        g = math.cos(ang) * system.j_field.gradient(q) + \
            math.sin(ang) * system.h_field.gradient(q)
        return g @ basis, basis

    h = 1e-6
    for _ in range(max_iter):
        r, basis = residual(p, phi)
        if np.linalg.norm(r) < tol:
            return p
        jac = np.empty((4, 5))
        for k in range(4):
            q = manifold.project(p + h * basis[:, k])
            rk, _ = residual(q, phi)
            jac[:, k] = (rk - r) / h
        rk, _ = residual(p, phi + h)
        jac[:, 4] = (rk - r) / h
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        if not np.all(np.isfinite(step)):
            return None
        norm = np.linalg.norm(step)
        if norm > 0.25:
            step *= 0.25 / norm
        p = manifold.project(p + basis @ step[:4])
        phi += step[4]
    return None


@dataclass
class SearchDiagnostics:
    seeds: int = 0
    diverged: int = 0
    out_of_region: int = 0


def find_critical_points(system, region=None, grid=12, tol=None, scale=None,
                         rng_seed=0, diagnostics=None):
    """Locate rank-0 and rank-1 critical points from a seed cloud.

    ``region`` is a value-space rectangle (j0, j1, h0, h1); found points
    with values outside it (with a small margin) are dropped.  ``scale``
    bounds the seed cloud on non-compact factors and is inferred from the
    region when omitted.
    """
    tolerances = tol if tol is not None else DEFAULT_TOL
    diag = diagnostics if diagnostics is not None else SearchDiagnostics()
    rng = np.random.default_rng(rng_seed)
    if scale is None:
        scale = 1.5
        if region is not None:
            scale = max(1.5, math.sqrt(2.0 * (abs(region[1]) + 1.5)))
    n_seeds = max(64, int(grid) * int(grid))
    seeds = [system.manifold.random_point(rng, scale=scale)
             for _ in range(n_seeds)]
    diag.seeds = len(seeds)

    margin = 0.0
    if region is not None:
        margin = 1e-6 * (1 + abs(region[1] - region[0])
                         + abs(region[3] - region[2]))

    def in_region(value):
        if region is None:
            return True
        j0, j1, h0, h1 = region
        return (j0 - margin <= value[0] <= j1 + margin
                and h0 - margin <= value[1] <= h1 + margin)

    found = []

    def register(p):
        if p is None:
            diag.diverged += 1
            return
        for q, _ in found:
            if np.linalg.norm(q - p) < tolerances.merge_distance:
                return
        rec = classify_critical_point(system, p, tolerances)
        if rec.rank >= 2:
            return
        if not in_region(rec.value):
            diag.out_of_region += 1
            return
        found.append((p, rec))

    for s in seeds:
        register(_newton_rank0(system, s, tolerances.newton_residual))
    for s in seeds:
        register(_newton_rank1(system, s, tolerances.newton_residual))

    records = [rec for _, rec in found]
    records.sort(key=lambda r: (r.rank, tuple(r.point.coords)))
    return records


def is_semitoric(system, region=None, grid=12, tol=None):
    """Gate: proper J, every singularity non-degenerate, no hyperbolic blocks.

    Returns (flag, certificate); the certificate lists each violating
    record and human-readable reasons, plus a caveat that the search is a
    finite sampling of the region.
    """
    records = find_critical_points(system, region=region, grid=grid, tol=tol)
    reasons = []
    violations = []
    if not system.j_is_proper:
        reasons.append("J is declared non-proper")
    for rec in records:
        if not rec.nondegenerate:
            violations.append(rec)
            reasons.append(
                f"degenerate critical point at value {rec.value}")
        elif rec.williamson[1] > 0:
            violations.append(rec)
            reasons.append(
                f"hyperbolic block at value {rec.value}, "
                f"type {rec.williamson}")
    certificate = {
        "records": records,
        "violations": violations,
        "reasons": reasons,
        "caveat": "search sampled a finite seed cloud; absence of further "
                  "critical points is not certified",
    }
    return (len(reasons) == 0, certificate)
