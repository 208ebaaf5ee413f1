"""Simulate an entangled-photon Clauser-Horne test in three formalisms.

* :mod:`~vacuum_bell_sim.fock`: truncated Fock-space operator oracle.
* :mod:`~vacuum_bell_sim.wwmodel`: phase-space (Weyl-Wigner) rates via Wick pairings.
* :mod:`~vacuum_bell_sim.localmc`: local Monte Carlo realisation of the phase-space model.
* :mod:`~vacuum_bell_sim.bell`: CH inequality, efficiency thresholds and angle search.
"""

__version__ = "0.1.0"

from .errors import InputError, NumericalError
from .wick import FieldExpr, Monomial, VacuumSample, field_expectation, monomial_expectation, sample_vacuum
from .wwmodel import ExperimentConfig, rates_ww
from .fock import rates_hs
from .localmc import DetectorParams, Rates, analytic_targets, clamp_study, estimate_rates
from .bell import CANONICAL_ANGLES, AngleSet, ch_report, efficiency_threshold, make_source

__all__ = [
    "__version__",
    "InputError",
    "NumericalError",
    "FieldExpr",
    "Monomial",
    "VacuumSample",
    "field_expectation",
    "monomial_expectation",
    "sample_vacuum",
    "ExperimentConfig",
    "rates_ww",
    "rates_hs",
    "DetectorParams",
    "Rates",
    "analytic_targets",
    "clamp_study",
    "estimate_rates",
    "CANONICAL_ANGLES",
    "AngleSet",
    "ch_report",
    "efficiency_threshold",
    "make_source",
]
