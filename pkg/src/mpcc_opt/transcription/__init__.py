"""Transcription of continuous-time problems into nonlinear programs."""
from .build import (
    Phase,
    PhaseSequence,
    StructuralError,
    UnsupportedFeatureError,
    build_minimum_time,
    build_mpcc,
    build_multiphase,
    build_nlp,
    complementarity_residual,
    extract_phases,
    extract_trajectory,
    initial_guess_vector,
    pack_trajectory,
)
from .layout import PhaseLayout, VariableLayout
from .nlp import EQUALITY, RELAXABLE, Block, NLPProblem
from .relaxation import (
    AggregatedBarrier,
    AggregatedFixed,
    PenaltyObjective,
    PerPairBarrier,
    PerPairFixed,
    RelaxationMode,
    alpha_sign,
    complementarity_terms,
    make_mode,
    mode_name,
)

__all__ = [
    "AggregatedBarrier",
    "AggregatedFixed",
    "Block",
    "EQUALITY",
    "NLPProblem",
    "PenaltyObjective",
    "PerPairBarrier",
    "PerPairFixed",
    "Phase",
    "PhaseLayout",
    "PhaseSequence",
    "RELAXABLE",
    "RelaxationMode",
    "StructuralError",
    "UnsupportedFeatureError",
    "VariableLayout",
    "alpha_sign",
    "build_minimum_time",
    "build_mpcc",
    "build_multiphase",
    "build_nlp",
    "complementarity_residual",
    "complementarity_terms",
    "extract_phases",
    "extract_trajectory",
    "initial_guess_vector",
    "make_mode",
    "mode_name",
    "pack_trajectory",
]
