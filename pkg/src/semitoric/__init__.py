"""Analysis toolkit for semitoric integrable systems on 4-manifolds."""

__version__ = "0.1.0"

from .systems import (  # noqa: F401
    PhasePoint,
    SystemModel,
    TangentVector,
    Tolerances,
    builtin_names,
    builtin_system,
    eval_F,
    hamiltonian_vector_field,
    load_system,
    parse_hamiltonian,
    poisson_bracket,
    recombined_system,
)
