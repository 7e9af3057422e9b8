"""Verification-based error mitigation for measurement-based computations.

The package simulates blinded computation rounds interleaved with trap-based
test rounds under time-dependent stochastic noise, post-selects contiguous
low-noise baskets, certifies each basket with a constrained minimisation of
correctness bounds and combines basket verdicts by Bayesian updating.
"""

from .sim import NoiseModel, PauliError, StateVector, new_state
from .pattern import (
    CouplingMap,
    KColouring,
    MeasurementPattern,
    check_embedding,
    cnot15,
    corrected_angle,
    compile_round,
    heavy_hex_coupling,
    two_colour,
    validate_pattern,
)
from .rounds import (
    ComputationRoundSpec,
    RoundTranscript,
    TestRoundSpec,
    decision_equals,
    evaluate_test_predicate,
    run_computation_round,
    run_test_round,
)

__version__ = "0.1.0"

__all__ = [
    "NoiseModel",
    "PauliError",
    "StateVector",
    "new_state",
    "CouplingMap",
    "KColouring",
    "MeasurementPattern",
    "check_embedding",
    "cnot15",
    "corrected_angle",
    "compile_round",
    "heavy_hex_coupling",
    "two_colour",
    "validate_pattern",
    "ComputationRoundSpec",
    "RoundTranscript",
    "TestRoundSpec",
    "decision_equals",
    "evaluate_test_predicate",
    "run_computation_round",
    "run_test_round",
    "__version__",
]
