"""Desk-scale quantization of the spin-oscillator and polygon recovery.

The sphere factor is quantized by spin-j matrices scaled by 1/j, the plane
factor by the Hermite-basis harmonic oscillator with the same hbar = 1/j;
this is the unique matching for which the two operators commute exactly
(the truncation keeps the commutator zero because the first operator is
diagonal in the oscillator index).  Columns of the joint spectrum are the
degenerate eigenspaces of the first operator; developing each column onto
consecutive integer heights and rescaling by hbar recovers the polygon
representative with a flat bottom edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConsistencyError
from .polygons import RationalPolygon, snap_polygon

TWO_PI = 2.0 * math.pi


def spin_matrices(spin_dim):
    """Scaled spin matrices (x, y_imag, z) with hbar = 1/j.

    Returns real sparse matrices; the y-component is returned as its
    imaginary part Y with y = i*Y, sign chosen so the commutators match
    the classical bracket table of the embedded sphere ({x, y} = -z and
    cyclic), which is what makes the spin-oscillator pair commute.
    """
    if spin_dim < 2:
        raise ValueError("spin_dim must be at least 2")
    j = (spin_dim - 1) / 2.0
    mz = j - np.arange(spin_dim)  # [j, j-1, ..., -j]
    low = np.sqrt(j * (j + 1) - mz[:-1] * (mz[:-1] - 1))
    s_minus = sp.diags(low, -1)  # lowers m by one step
    s_x = 0.5 * (s_minus + s_minus.T)
    # standard S_y = (S_plus - S_minus)/(2i) = i*(S_minus - S_plus)/2;
    # the embedded-sphere convention needs y = -S_y/j
    y_imag = -0.5 * (s_minus - s_minus.T) / j
    s_z = sp.diags(mz)
    return (s_x / j).tocsr(), y_imag.tocsr(), (s_z / j).tocsr()


def oscillator_matrices(hbar, n_basis):
    """(number + 1/2)*hbar, position u, and momentum as p = i*P, P real."""
    n = np.arange(n_basis)
    h_osc = sp.diags(hbar * (n + 0.5))
    root = np.sqrt(hbar * n[1:] / 2.0)
    a_low = sp.diags(root, 1)  # annihilation: <n-1|a|n> = sqrt(hbar n / 2)
    u = (a_low + a_low.T).tocsr()
    p_imag = (a_low.T - a_low).tocsr()  # p = i(adag - a)*sqrt(hbar/2)
    return h_osc.tocsr(), u, p_imag


def build_operators(hbar=None, spin_dim=None, n_basis=64):
    """Joint quantum pair (J_mat, H_mat) on spin tensor oscillator.

    hbar and the spin dimension are tied by hbar = 1/j unless both are
    given explicitly; exact commutation requires the tie.  Both operators
    are real symmetric sparse matrices.
    """
    if hbar is None and spin_dim is None:
        raise ValueError("give hbar or spin_dim")
    if spin_dim is None:
        j = 1.0 / hbar
        spin_dim = int(round(2 * j + 1))
        if abs((spin_dim - 1) / 2.0 - j) > 1e-12:
            raise ValueError(f"hbar={hbar} is not 1/j for half-integer j")
    if hbar is None:
        hbar = 2.0 / (spin_dim - 1)
    if n_basis < 8:
        raise ValueError("oscillator basis too small; need n_basis >= 8")
    x_s, y_imag, z_s = spin_matrices(spin_dim)
    h_osc, u, p_imag = oscillator_matrices(hbar, n_basis)
    eye_s = sp.identity(spin_dim, format="csr")
    eye_o = sp.identity(n_basis, format="csr")
    j_mat = sp.kron(eye_s, h_osc) + sp.kron(z_s, eye_o)
    # (i Y) kron (i P) = -(Y kron P): everything stays real
    h_mat = 0.5 * (sp.kron(x_s, u) - sp.kron(y_imag, p_imag))
    return j_mat.tocsr(), h_mat.tocsr(), hbar


def commutator_residual(j_mat, h_mat):
    """Relative Frobenius norm of [J, H]; exactly zero for the tied pair."""
    comm = j_mat @ h_mat - h_mat @ j_mat
    denom = sp.linalg.norm(j_mat) * sp.linalg.norm(h_mat)
    return sp.linalg.norm(comm) / max(denom, 1e-300)


@dataclass
class JointSpectrum:
    hbar: float
    points: list                # (lambda_J, lambda_H), sorted
    columns: list               # (lambda_J, sorted ndarray of lambda_H)
    truncation: int
    spin_dim: int
    window: tuple
    certification: float        # max point drift under N -> 2N, inside window

    @property
    def column_counts(self):
        return [len(col) for _, col in self.columns]


def _spectrum_columns(j_mat, h_mat, window, cluster_tol=1e-10):
    diag = j_mat.diagonal()
    offdiag = j_mat - sp.diags(diag)
    if offdiag.nnz and np.max(np.abs(offdiag.data)) > 1e-12:
        raise ConsistencyError("first operator is not diagonal in this basis")
    order = np.argsort(diag, kind="stable")
    sorted_d = diag[order]
    columns = []
    start = 0
    h_csr = h_mat.tocsr()
    for k in range(1, len(sorted_d) + 1):
        if k == len(sorted_d) or sorted_d[k] - sorted_d[start] > cluster_tol:
            lam_j = float(np.mean(sorted_d[start:k]))
            if window is None or (window[0] <= lam_j <= window[1]):
                idx = order[start:k]
                block = h_csr[idx][:, idx].toarray()
                lam_h = np.linalg.eigvalsh(block)
                if window is None:
                    columns.append((lam_j, lam_h))
                else:
                    keep = lam_h[(lam_h >= window[2]) & (lam_h <= window[3])]
                    if len(keep):
                        columns.append((lam_j, keep))
            start = k
    return columns


def joint_spectrum(hbar=None, spin_dim=None, n_basis=64, window=None,
                   certify=True):
    """Eigenvalues of H on each eigenspace of J, grouped in columns.

    ``window`` is (jmin, jmax, hmin, hmax) in eigenvalue space; the
    truncation is certified by recomputing at twice the oscillator basis
    and matching points inside the window.
    """
    j_mat, h_mat, hbar = build_operators(hbar, spin_dim, n_basis)
    spin_dim = spin_dim or int(round(2.0 / hbar + 1))
    columns = _spectrum_columns(j_mat, h_mat, window)
    cert = math.nan
    if certify:
        j2, h2, _ = build_operators(hbar, spin_dim, 2 * n_basis)
        columns2 = _spectrum_columns(j2, h2, window)
        ref = {round(lj, 9): lh for lj, lh in columns2}
        cert = 0.0
        for lam_j, lam_h in columns:
            other = ref.get(round(lam_j, 9))
            if other is None or len(other) < len(lam_h):
                cert = math.inf
                continue
            cert = max(cert, float(np.max(np.abs(other[:len(lam_h)]
                                                 - lam_h))))
    points = [(lj, float(lh_k)) for lj, lh in columns for lh_k in lh]
    points.sort()
    return JointSpectrum(hbar=hbar, points=points, columns=columns,
                         truncation=n_basis, spin_dim=spin_dim,
                         window=window, certification=cert)


@dataclass
class RecoveredPolygon:
    hbar: float
    developed: list           # (lambda_J, hbar * k) lattice points
    hull: np.ndarray          # vertices of the convex hull (float, CCW)
    snapped: RationalPolygon
    column_counts_in: list
    column_counts_out: list


def recover_polygon(spectrum, snap_tol=None, max_denominator=64):
    """Lattice development of the joint spectrum and its convex hull.

    Each column keeps its eigenvalue count but the eigenvalues are
    re-placed at consecutive integer heights anchored at zero (the
    flat-bottom polygon representative); the hull of the developed
    lattice, with heights scaled back by hbar, approximates the polygon
    invariant as hbar decreases.
    """
    hbar = spectrum.hbar
    developed = []
    counts_in, counts_out = [], []
    for lam_j, lam_h in spectrum.columns:
        counts_in.append(len(lam_h))
        col = [(lam_j, hbar * t) for t in range(len(lam_h))]
        counts_out.append(len(col))
        developed.extend(col)
    if counts_in != counts_out:
        raise ConsistencyError("per-column count changed during development")
    pts = np.asarray(developed)
    hull = _hull_ccw(pts)
    if snap_tol is None:
        snap_tol = 0.6 * hbar
    snapped = _snap_hull_vertices(hull, snap_tol, max_denominator)
    return RecoveredPolygon(hbar=hbar, developed=developed, hull=hull,
                            snapped=snapped, column_counts_in=counts_in,
                            column_counts_out=counts_out)


def _snap_hull_vertices(hull, tol, max_denominator):
    """Vertex-wise rational snap of a float hull (O(hbar) accurate)."""
    from .polygons import convex_hull, snap_value

    verts = []
    for x, y in hull:
        vx = snap_value(float(x), tol)
        vy = snap_value(float(y), tol)
        if vx.denominator > max_denominator or \
                vy.denominator > max_denominator:
            continue
        verts.append((vx, vy))
    cycle = convex_hull(verts)
    if len(cycle) < 3:
        return None
    return RationalPolygon(tuple(cycle))


def _hull_ccw(pts):
    from scipy.spatial import ConvexHull

    if len(pts) < 3:
        return np.asarray(pts, float)
    hull = ConvexHull(np.asarray(pts, float))
    return np.asarray(pts, float)[hull.vertices]


# ---------------------------------------------------------------------------
# Geometry helpers for convergence checks
# ---------------------------------------------------------------------------

def _polygon_boundary_samples(vertices, per_edge=60):
    verts = np.asarray(vertices, float)
    out = []
    n = len(verts)
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        ts = np.linspace(0.0, 1.0, per_edge, endpoint=False)
        out.append(a[None, :] + ts[:, None] * (b - a)[None, :])
    return np.vstack(out)


def clip_polygon_x(vertices, x_lo, x_hi):
    """Clip a convex polygon (float vertices) to a vertical strip."""
    verts = list(np.asarray(vertices, float))
    pts = []
    n = len(verts)
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        for p in (a,):
            if x_lo - 1e-12 <= p[0] <= x_hi + 1e-12:
                pts.append(p)
        for xc in (x_lo, x_hi):
            if (a[0] - xc) * (b[0] - xc) < 0:
                t = (xc - a[0]) / (b[0] - a[0])
                pts.append(a + t * (b - a))
    from scipy.spatial import ConvexHull

    pts = np.asarray(pts)
    hull = ConvexHull(pts)
    return pts[hull.vertices]


def hausdorff_distance(vertices_a, vertices_b, per_edge=80):
    """Symmetric Hausdorff distance between two convex polygons."""
    pa = _polygon_boundary_samples(vertices_a, per_edge)
    pb = _polygon_boundary_samples(vertices_b, per_edge)
    d_ab = np.max(np.min(np.linalg.norm(
        pa[:, None, :] - pb[None, :, :], axis=2), axis=1))
    d_ba = np.max(np.min(np.linalg.norm(
        pb[:, None, :] - pa[None, :, :], axis=2), axis=1))
    return float(max(d_ab, d_ba))


def sphere_ladder(hbar):
    """Spectrum of the scaled height operator: the 1-d toric model."""
    _, _, z_s = spin_matrices(int(round(2.0 / hbar + 1)))
    return np.sort(z_s.diagonal())
