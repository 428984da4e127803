"""Metastability rates for anchored fixed-point iterations, with numerical checks."""

from .counterfn import (
    Bound,
    CounterFn,
    LambdaModuli,
    LambdaSeq,
    default_harmonic_moduli,
    iterate,
    majorizes,
    parse_counterfn,
    tilde,
)
from .iterations import (
    IterationTrace,
    SolverError,
    bauschke_sequence,
    browder_sequence,
    halpern_sequence,
    scan_cyclic,
)
from .rates import ProblemParams, phi_bauschke, phi_browder, phi_for_scheme, phi_wittmann
from .space import OperatorFamily, parse_body, parse_operator
from .verify import (
    check_asymptotic_regularity,
    check_metastability,
    check_projection_lemmas,
    minimal_window_oracle,
    run_counterexample,
    validate_moduli,
)

__version__ = "0.1.0"
