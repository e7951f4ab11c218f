"""System records: a phase space plus the commuting pair (J, H).

Builtin systems carry analytic gradients and Hessians; user systems parsed
from descriptor files get exact symbolic derivatives from the expression
module.  Everything here is immutable after construction and safe to share
between workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidPointError
from .expressions import ParsedField
from .manifolds import Manifold, get_manifold


@dataclass
class Tolerances:
    """Default numerical tolerances; override via keyword or CLI --tol."""

    constraint: float = 1e-12
    bracket: float = 1e-9
    derivative_check: float = 1e-6
    rank_threshold: float = 1e-7
    newton_residual: float = 1e-10
    merge_distance: float = 1e-6
    flow: float = 1e-11
    lattice_residual: float = 1e-7

    def override(self, updates):
        return replace(self, **updates)


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class PhasePoint:
    """Chart-tagged coordinates on one of the model phase spaces."""

    chart_id: str
    coords: tuple

    @property
    def array(self):
        return np.asarray(self.coords, dtype=float)


@dataclass(frozen=True)
class TangentVector:
    base: PhasePoint
    components: tuple

    @property
    def array(self):
        return np.asarray(self.components, dtype=float)


class AnalyticField:
    """Scalar field given by closed-form value/gradient/hessian callables."""

    def __init__(self, value, gradient, hessian):
        self._value, self._gradient, self._hessian = value, gradient, hessian

    def value(self, coords):
        return float(self._value(np.asarray(coords, dtype=float)))

    def gradient(self, coords):
        return np.asarray(self._gradient(np.asarray(coords, dtype=float)), dtype=float)

    def hessian(self, coords):
        return np.asarray(self._hessian(np.asarray(coords, dtype=float)), dtype=float)


class CombinedField:
    """a*F1 + b*F2, used for flown combinations and isomorphism tests."""

    def __init__(self, a, f1, b, f2):
        self.a, self.b, self.f1, self.f2 = a, b, f1, f2

    def value(self, coords):
        return self.a * self.f1.value(coords) + self.b * self.f2.value(coords)

    def gradient(self, coords):
        return self.a * self.f1.gradient(coords) + self.b * self.f2.gradient(coords)

    def hessian(self, coords):
        return self.a * self.f1.hessian(coords) + self.b * self.f2.hessian(coords)


@dataclass(frozen=True)
class SystemModel:
    """Manifold descriptor plus the pair (J, H) with derivative evaluators."""

    name: str
    manifold: Manifold
    j_field: object
    h_field: object
    j_is_proper: bool
    notes: str = ""

    def point(self, coords, tol=None):
        p = PhasePoint(self.manifold.name, tuple(float(c) for c in coords))
        self.check_point(p, tol)
        return p

    def check_point(self, point, tol=None):
        tol = tol if tol is not None else DEFAULT_TOL.constraint
        if point.chart_id != self.manifold.name:
            raise InvalidPointError(
                f"point chart {point.chart_id!r} does not match {self.manifold.name!r}")
        self.manifold.check_point(point.array, tol)

    def j_value(self, coords):
        return self.j_field.value(coords)

    def h_value(self, coords):
        return self.h_field.value(coords)

    def f_value(self, coords):
        return np.array([self.j_field.value(coords), self.h_field.value(coords)])

    def field(self, which):
        if which == "J":
            return self.j_field
        if which == "H":
            return self.h_field
        raise KeyError(f"unknown field {which!r}, expected 'J' or 'H'")


# ---------------------------------------------------------------------------
# Module operations
# ---------------------------------------------------------------------------

def eval_F(system, point, tol=None):
    """Momentum-map value (J(p), H(p)); rejects off-manifold points."""
    system.check_point(point, tol)
    coords = point.array
    return (system.j_field.value(coords), system.h_field.value(coords))


def hamiltonian_vector_field(system, which, point, tol=None):
    """The vector field X_f fixed by omega(X_f, .) = df, as a TangentVector."""
    system.check_point(point, tol)
    coords = point.array
    grad = system.field(which).gradient(coords)
    vec = system.manifold.ham_vector(coords, grad)
    return TangentVector(point, tuple(vec))


def poisson_bracket(system, point, tol=None):
    """{J, H}(p) = omega(X_J, X_H) = dJ(X_H); vanishes for integrable pairs."""
    system.check_point(point, tol)
    coords = point.array
    x_h = system.manifold.ham_vector(coords, system.h_field.gradient(coords))
    return float(system.j_field.gradient(coords) @ x_h)


def parse_hamiltonian(source, manifold):
    """Parse an expression over the manifold's chart variables."""
    if isinstance(manifold, str):
        manifold = get_manifold(manifold)
    return ParsedField(source, manifold.coord_names)


# ---------------------------------------------------------------------------
# Builtin systems
# ---------------------------------------------------------------------------

def _spin_oscillator():
    def j_val(p):
        return 0.5 * (p[3] ** 2 + p[4] ** 2) + p[2]

    def j_grad(p):
        return np.array([0.0, 0.0, 1.0, p[3], p[4]])

    def j_hess(p):
        h = np.zeros((5, 5))
        h[3, 3] = h[4, 4] = 1.0
        return h

    def h_val(p):
        return 0.5 * (p[3] * p[0] + p[4] * p[1])

    def h_grad(p):
        return 0.5 * np.array([p[3], p[4], 0.0, p[0], p[1]])

    def h_hess(p):
        h = np.zeros((5, 5))
        h[0, 3] = h[3, 0] = 0.5
        h[1, 4] = h[4, 1] = 0.5
        return h

    return SystemModel(
        name="spin-oscillator",
        manifold=get_manifold("s2xr2"),
        j_field=AnalyticField(j_val, j_grad, j_hess),
        h_field=AnalyticField(h_val, h_grad, h_hess),
        j_is_proper=True,
        notes="coupled spin-oscillator; semitoric with one focus-focus point",
    )


def _height_field(offset, dim):
    """z-coordinate of the sphere factor starting at index ``offset``."""
    def val(p):
        return p[offset + 2]

    def grad(p):
        g = np.zeros(dim)
        g[offset + 2] = 1.0
        return g

    def hess(p):
        return np.zeros((dim, dim))

    return AnalyticField(val, grad, hess)


def _s2xs2_hyperbolic():
    def h_val(p):
        return p[3] * p[4]

    def h_grad(p):
        g = np.zeros(6)
        g[3], g[4] = p[4], p[3]
        return g

    def h_hess(p):
        h = np.zeros((6, 6))
        h[3, 4] = h[4, 3] = 1.0
        return h

    return SystemModel(
        name="s2xs2-hyperbolic",
        manifold=get_manifold("s2xs2"),
        j_field=_height_field(0, 6),
        h_field=AnalyticField(h_val, h_grad, h_hess),
        j_is_proper=True,
        notes="J=z1, H=x2*y2; proper circle action but hyperbolic blocks",
    )


def _s2xs2_toric():
    return SystemModel(
        name="s2xs2-toric",
        manifold=get_manifold("s2xs2"),
        j_field=_height_field(0, 6),
        h_field=_height_field(3, 6),
        j_is_proper=True,
        notes="product of two height functions; toric, polygon is a square",
    )


def _spherical_pendulum():
    def j_val(p):
        return p[0] * p[4] - p[1] * p[3]

    def j_grad(p):
        return np.array([p[4], -p[3], 0.0, -p[1], p[0], 0.0])

    def j_hess(p):
        h = np.zeros((6, 6))
        h[0, 4] = h[4, 0] = 1.0
        h[1, 3] = h[3, 1] = -1.0
        return h

    def h_val(p):
        return 0.5 * (p[3] ** 2 + p[4] ** 2 + p[5] ** 2) + p[2]

    def h_grad(p):
        return np.array([0.0, 0.0, 1.0, p[3], p[4], p[5]])

    def h_hess(p):
        h = np.zeros((6, 6))
        h[3, 3] = h[4, 4] = h[5, 5] = 1.0
        return h

    return SystemModel(
        name="spherical-pendulum",
        manifold=get_manifold("tstars2"),
        j_field=AnalyticField(j_val, j_grad, j_hess),
        h_field=AnalyticField(h_val, h_grad, h_hess),
        j_is_proper=False,
        notes="vertical angular momentum and energy; J is not proper",
    )


def _cp2_moment_field(which, lam):
    """lam*rho_k/(1 + rho_1 + rho_2) on the CP^2 chart, k = which."""
    sl = slice(0, 2) if which == 0 else slice(2, 4)

    def val(p):
        rho = p[sl] @ p[sl]
        return lam * rho / (1.0 + p @ p)

    def grad(p):
        d = 1.0 + p @ p
        rho = p[sl] @ p[sl]
        rho_g = np.zeros(4)
        rho_g[sl] = 2.0 * p[sl]
        return lam * (rho_g / d - rho * (2.0 * p) / d ** 2)

    def hess(p):
        d = 1.0 + p @ p
        rho = p[sl] @ p[sl]
        rho_g = np.zeros(4)
        rho_g[sl] = 2.0 * p[sl]
        d_g = 2.0 * p
        rho_h = np.zeros((4, 4))
        rho_h[sl, sl] = 2.0 * np.eye(2)
        d_h = 2.0 * np.eye(4)
        return lam * (rho_h / d
                      - (np.outer(rho_g, d_g) + np.outer(d_g, rho_g)) / d ** 2
                      - rho * d_h / d ** 2
                      + 2.0 * rho * np.outer(d_g, d_g) / d ** 3)

    return AnalyticField(val, grad, hess)


def _cp2_toric(lam=3.0):
    return SystemModel(
        name="cp2-toric",
        manifold=get_manifold("cp2", lam=lam),
        j_field=_cp2_moment_field(0, lam),
        h_field=_cp2_moment_field(1, lam),
        j_is_proper=True,
        notes=f"CP^2 torus action in an affine chart, scale {lam:g}; "
              "momentum image is the open triangle",
    )


def _r4_free():
    def make(idx):
        def val(p):
            return p[idx]

        def grad(p):
            g = np.zeros(4)
            g[idx] = 1.0
            return g

        def hess(p):
            return np.zeros((4, 4))

        return AnalyticField(val, grad, hess)

    return SystemModel(
        name="r4-free",
        manifold=get_manifold("r4"),
        j_field=make(2),
        h_field=make(3),
        j_is_proper=False,
        notes="(xi1, xi2) on canonical R^4; no critical points anywhere",
    )


_BUILTIN_FACTORIES = {
    "spin-oscillator": _spin_oscillator,
    "s2xs2-hyperbolic": _s2xs2_hyperbolic,
    "s2xs2-toric": _s2xs2_toric,
    "spherical-pendulum": _spherical_pendulum,
    "cp2-toric": _cp2_toric,
    "r4-free": _r4_free,
}


def builtin_system(name, **kwargs):
    try:
        factory = _BUILTIN_FACTORIES[name]
    except KeyError:
        raise KeyError(f"unknown builtin {name!r}; known: {sorted(_BUILTIN_FACTORIES)}")
    return factory(**kwargs)


def builtin_names():
    return sorted(_BUILTIN_FACTORIES)


def recombined_system(system, lam=0.0, scale=1.0, name=None):
    """Replace H by scale*H + lam*J (an isomorphism when scale > 0)."""
    if scale <= 0:
        raise ValueError("scale must be positive for an isomorphism")
    h_new = CombinedField(lam, system.j_field, scale, system.h_field)
    return replace(system, name=name or f"{system.name}~recombined",
                   h_field=h_new)


# ---------------------------------------------------------------------------
# Descriptor files
# ---------------------------------------------------------------------------

def _field_from_descriptor(entry, manifold):
    if isinstance(entry, str) and entry.startswith("builtin:"):
        ref = entry[len("builtin:"):]
        sys_name, _, which = ref.partition(".")
        base = builtin_system(sys_name)
        if base.manifold.name != manifold.name:
            raise ValueError(
                f"builtin field {ref!r} lives on {base.manifold.name!r}, "
                f"not {manifold.name!r}")
        return base.field(which or "J")
    return ParsedField(entry, manifold.coord_names)


def system_from_descriptor(data):
    """Build a SystemModel from a JSON-style descriptor dict."""
    manifold = get_manifold(data["manifold"])
    return SystemModel(
        name=data.get("name", "custom"),
        manifold=manifold,
        j_field=_field_from_descriptor(data["J"], manifold),
        h_field=_field_from_descriptor(data["H"], manifold),
        j_is_proper=bool(data.get("j_is_proper", False)),
        notes=data.get("notes", "user descriptor"),
    )


def load_system(path_or_name):
    """Builtin name, or a path to a JSON descriptor file."""
    if path_or_name in _BUILTIN_FACTORIES:
        return builtin_system(path_or_name)
    with open(path_or_name) as fh:
        return system_from_descriptor(json.load(fh))
