"""Operational tests of macrorealism for generalized probabilistic theories.

Scenarios are simulated into prepare-measure counts, the counts are
reconstructed into a realized GPT by theory-agnostic tomography, and the
realized GPT is tested for simplex embeddability.  The traditional witnesses
(Leggett-Garg, no-signaling in time, nondisturbance) are provided alongside.
"""

__version__ = "0.1.0"

from .core import GptEffect, GptState, GptSystem, GptTransformation, Instrument, make_simplicial, probability
from .embedding import (
    Classification,
    EmbeddingResult,
    build_cones,
    classify,
    robustness_depolarizing,
    test_noncontextuality,
    test_strict_classicality,
)
from .scenarios import Scenario, build_scenario
from .simulator import CountsRecord, Measurement, Schedule, build_data_matrix, simulate
from .tomography import RealizedGpt, reconstruct
from .witnesses import disturbance, lg_correlators, nondisturbance_witness, nsit_delta
