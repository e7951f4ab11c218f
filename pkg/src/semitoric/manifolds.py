"""Model phase spaces and their Poisson structure.

Every manifold is presented through ambient coordinates with (possibly
empty) constraint functions; all of them carry 4 intrinsic phase-space
dimensions.  Sphere factors are embedded unit vectors in R^3, which keeps
the poles (where the interesting singular points live) free of coordinate
artifacts.  The orientation of each factor is calibrated once and for all
so that the builtin circle actions have period exactly 2*pi and the pair
(J, H) of every builtin system Poisson-commutes; the constant below records
that single sign choice.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import null_space

from .errors import InvalidPointError

# omega(X_f, .) = +df; flipping this sign inverts every flow, period sign
# and monodromy matrix at once.
OMEGA_SIGN = +1.0


def _cross_form(q):
    """Matrix W with a.(W b) = -q.(a x b), the sphere area-form pairing."""
    x, y, z = q
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _cross3(a, b):
    """Hand-rolled 3-vector cross product (np.cross is slow for triples)."""
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


class Manifold:
    """Base interface; subclasses fill in coordinate data and structure."""

    name = ""
    coord_names = ()
    dim_ambient = 0

    def constraints(self, p):
        return np.zeros(0)

    def constraint_grads(self, p):
        return np.zeros((0, self.dim_ambient))

    def constraint_hessians(self, p):
        return np.zeros((0, self.dim_ambient, self.dim_ambient))

    def project(self, p):
        return np.asarray(p, dtype=float)

    def omega_matrix(self, p):
        """Pairing matrix W with omega(a, b) = a.(W b) on tangent vectors."""
        raise NotImplementedError

    def ham_vector(self, p, grad):
        """Hamiltonian vector field from the ambient gradient of f at p."""
        raise NotImplementedError

    def tangent_basis(self, p):
        """Orthonormal (dim_ambient x 4) basis of the tangent space at p."""
        grads = self.constraint_grads(p)
        if len(grads) == 0:
            return np.eye(self.dim_ambient)
        basis = null_space(grads)
        if basis.shape[1] != self.dim_ambient - len(grads):
            raise InvalidPointError("degenerate constraint set at point")
        return basis

    def random_point(self, rng, scale=1.0):
        raise NotImplementedError

    def check_point(self, p, tol):
        c = self.constraints(p)
        if len(c) and np.max(np.abs(c)) > tol:
            raise InvalidPointError(
                f"point violates {self.name} constraints by {np.max(np.abs(c)):.3e}")


class SphereR2(Manifold):
    """S^2 x R^2 with coordinates (x, y, z, u, v) and |(x,y,z)| = 1."""

    name = "s2xr2"
    coord_names = ("x", "y", "z", "u", "v")
    dim_ambient = 5

    def constraints(self, p):
        return np.array([0.5 * (p[0] ** 2 + p[1] ** 2 + p[2] ** 2 - 1.0)])

    def constraint_grads(self, p):
        g = np.zeros((1, 5))
        g[0, :3] = p[:3]
        return g

    def constraint_hessians(self, p):
        h = np.zeros((1, 5, 5))
        h[0, :3, :3] = np.eye(3)
        return h

    def project(self, p):
        p = np.asarray(p, dtype=float).copy()
        p[:3] /= np.linalg.norm(p[:3])
        return p

    def omega_matrix(self, p):
        w = np.zeros((5, 5))
        w[:3, :3] = _cross_form(p[:3])
        w[3, 4], w[4, 3] = 1.0, -1.0
        return OMEGA_SIGN * w

    def ham_vector(self, p, grad):
        out = np.empty(5)
        out[:3] = _cross3(p[:3], grad[:3])
        out[3] = grad[4]
        out[4] = -grad[3]
        return OMEGA_SIGN * out

    def random_point(self, rng, scale=1.0):
        q = rng.normal(size=3)
        q /= np.linalg.norm(q)
        uv = rng.uniform(-scale, scale, size=2)
        return np.concatenate([q, uv])


class SphereSphere(Manifold):
    """S^2 x S^2 with coordinates (x1, y1, z1, x2, y2, z2)."""

    name = "s2xs2"
    coord_names = ("x1", "y1", "z1", "x2", "y2", "z2")
    dim_ambient = 6

    def constraints(self, p):
        return np.array([
            0.5 * (p[0] ** 2 + p[1] ** 2 + p[2] ** 2 - 1.0),
            0.5 * (p[3] ** 2 + p[4] ** 2 + p[5] ** 2 - 1.0),
        ])

    def constraint_grads(self, p):
        g = np.zeros((2, 6))
        g[0, :3] = p[:3]
        g[1, 3:] = p[3:]
        return g

    def constraint_hessians(self, p):
        h = np.zeros((2, 6, 6))
        h[0, :3, :3] = np.eye(3)
        h[1, 3:, 3:] = np.eye(3)
        return h

    def project(self, p):
        p = np.asarray(p, dtype=float).copy()
        p[:3] /= np.linalg.norm(p[:3])
        p[3:] /= np.linalg.norm(p[3:])
        return p

    def omega_matrix(self, p):
        w = np.zeros((6, 6))
        w[:3, :3] = _cross_form(p[:3])
        w[3:, 3:] = _cross_form(p[3:])
        return OMEGA_SIGN * w

    def ham_vector(self, p, grad):
        out = np.empty(6)
        out[:3] = _cross3(p[:3], grad[:3])
        out[3:] = _cross3(p[3:], grad[3:])
        return OMEGA_SIGN * out

    def random_point(self, rng, scale=1.0):
        q1 = rng.normal(size=3)
        q2 = rng.normal(size=3)
        return np.concatenate([q1 / np.linalg.norm(q1), q2 / np.linalg.norm(q2)])


class R4(Manifold):
    """Canonical R^4 with coordinates (x1, x2, xi1, xi2), omega = dx ^ dxi."""

    name = "r4"
    coord_names = ("x1", "x2", "xi1", "xi2")
    dim_ambient = 4

    _W = np.array([
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, -1.0, 0.0, 0.0],
    ])

    def omega_matrix(self, p):
        return OMEGA_SIGN * self._W

    def ham_vector(self, p, grad):
        return OMEGA_SIGN * np.array([grad[2], grad[3], -grad[0], -grad[1]])

    def random_point(self, rng, scale=1.0):
        return rng.uniform(-scale, scale, size=4)


class TStarS2(Manifold):
    """T*S^2 embedded in R^6 as (q, p) with |q| = 1 and q.p = 0.

    Hamiltonian vector fields use the Dirac-bracket correction for the two
    second-class constraints; {C1, C2} = |q|^2 = 1 on the manifold.
    """

    name = "tstars2"
    coord_names = ("qx", "qy", "qz", "px", "py", "pz")
    dim_ambient = 6

    def constraints(self, p):
        q, mom = p[:3], p[3:]
        return np.array([0.5 * (q @ q - 1.0), q @ mom])

    def constraint_grads(self, p):
        q, mom = p[:3], p[3:]
        g = np.zeros((2, 6))
        g[0, :3] = q
        g[1, :3] = mom
        g[1, 3:] = q
        return g

    def constraint_hessians(self, p):
        h = np.zeros((2, 6, 6))
        h[0, :3, :3] = np.eye(3)
        h[1, :3, 3:] = np.eye(3)
        h[1, 3:, :3] = np.eye(3)
        return h

    def project(self, p):
        p = np.asarray(p, dtype=float).copy()
        q = p[:3] / np.linalg.norm(p[:3])
        mom = p[3:] - (q @ p[3:]) * q
        return np.concatenate([q, mom])

    def omega_matrix(self, p):
        w = np.zeros((6, 6))
        w[:3, 3:] = np.eye(3)
        w[3:, :3] = -np.eye(3)
        return OMEGA_SIGN * w

    @staticmethod
    def _canonical_field(grad):
        return np.concatenate([grad[3:], -grad[:3]])

    def ham_vector(self, p, grad):
        q, mom = p[:3], p[3:]
        x_f = self._canonical_field(grad)
        # {f, C1} = grad_q f . dC1/dp - grad_p f . dC1/dq, etc.
        g1 = np.concatenate([q, np.zeros(3)])
        g2 = np.concatenate([mom, q])
        br_f_c1 = grad[:3] @ g1[3:] - grad[3:] @ g1[:3]
        br_f_c2 = grad[:3] @ g2[3:] - grad[3:] @ g2[:3]
        x_f = x_f + br_f_c1 * self._canonical_field(g2) \
            - br_f_c2 * self._canonical_field(g1)
        return OMEGA_SIGN * x_f

    def random_point(self, rng, scale=1.0):
        q = rng.normal(size=3)
        q /= np.linalg.norm(q)
        mom = rng.uniform(-scale, scale, size=3)
        mom -= (q @ mom) * q
        return np.concatenate([q, mom])


class CP2Chart(Manifold):
    """Affine chart of CP^2 with a scaled Fubini-Study form.

    Coordinates (x1, y1, x2, y2) stand for (w1, w2) = (x1+iy1, x2+iy2);
    the standard torus action has momentum lam*rho_k/(1+rho_1+rho_2),
    whose image is the triangle hull{0, lam*e1, lam*e2} minus the far edge.
    """

    name = "cp2"
    coord_names = ("x1", "y1", "x2", "y2")
    dim_ambient = 4

    def __init__(self, lam=3.0):
        self.lam = float(lam)

    def _hermitian(self, p):
        w = np.array([p[0] + 1j * p[1], p[2] + 1j * p[3]])
        rho = 1.0 + np.real(w @ np.conj(w))
        return ((rho * np.eye(2) - np.outer(np.conj(w), w)) / rho ** 2), w

    def omega_matrix(self, p):
        h, _ = self._hermitian(p)
        # On complex representatives A, B of tangent vectors the form reads
        # omega(a, b) = 2*lam*Im(conj(A) @ h.T @ B); near w=0 this is
        # 2*lam*(dx1^dy1 + dx2^dy2).
        basis = np.array([[1.0, 0.0], [1j, 0.0], [0.0, 1.0], [0.0, 1j]])
        w = np.zeros((4, 4))
        for a in range(4):
            for b in range(a + 1, 4):
                val = 2.0 * self.lam * np.imag(np.conj(basis[a]) @ h.T @ basis[b])
                w[a, b] = val
                w[b, a] = -val
        return OMEGA_SIGN * w

    def ham_vector(self, p, grad):
        return np.linalg.solve(self.omega_matrix(p).T, grad)

    def random_point(self, rng, scale=1.0):
        return rng.normal(scale=scale, size=4)


_REGISTRY = {
    "s2xr2": SphereR2,
    "s2xs2": SphereSphere,
    "r4": R4,
    "tstars2": TStarS2,
    "cp2": CP2Chart,
}


def get_manifold(name, **kwargs):
    try:
        cls = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown manifold {name!r}; known: {sorted(_REGISTRY)}")
    return cls(**kwargs) if kwargs else cls()
