"""Phase-space (Weyl-Wigner) description of the two-mode down-conversion experiment.

The detector fields are linear forms in the signal (mode 0) and idler
(mode 1) vacuum amplitudes.  Analytic rates go through the Wick engine;
per-realisation intensities feed the local Monte Carlo model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .wick import FieldExpr, VacuumSample, evaluate, field_expectation

SIGNAL_MODE = 0
IDLER_MODE = 1
N_MODES = 2

#: Beyond this the first-order expansion in D is not trusted.
MAX_ABS_D = 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    theta: float = math.pi / 4
    phi: float = math.pi / 8
    d: complex = 0.1

    def __post_init__(self):
        for name in ("theta", "phi"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InputError(f"{name} must be finite, got {value}")
        d = complex(self.d)
        if not (math.isfinite(d.real) and math.isfinite(d.imag)):
            raise InputError(f"D must be finite, got {self.d}")
        if not abs(d) < MAX_ABS_D:
            raise InputError(f"|D| must be < {MAX_ABS_D}, got {abs(d)}")
        object.__setattr__(self, "d", d)

    def with_angles(self, theta: float, phi: float) -> "ExperimentConfig":
        return ExperimentConfig(theta, phi, self.d)

    def with_d(self, d: complex) -> "ExperimentConfig":
        return ExperimentConfig(self.theta, self.phi, d)


def _amp(mode: int, conj: bool, coeff: complex) -> FieldExpr:
    return FieldExpr.amplitude(mode, conj, coeff)


def alice_fields(theta: float, d: complex) -> tuple[FieldExpr, FieldExpr]:
    """Vacuum part and order-D part of Alice's positive-frequency field."""
    c, s = math.cos(theta), math.sin(theta)
    e0 = _amp(SIGNAL_MODE, False, c) + _amp(IDLER_MODE, False, 1j * s)
    e1 = complex(d) * (_amp(IDLER_MODE, True, c) + _amp(SIGNAL_MODE, True, 1j * s))
    return e0, e1


def bob_fields(phi: float, d: complex) -> tuple[FieldExpr, FieldExpr]:
    """Vacuum part and order-D part of Bob's positive-frequency field."""
    c, s = math.cos(phi), math.sin(phi)
    e0 = _amp(SIGNAL_MODE, False, -1j * s) + _amp(IDLER_MODE, False, c)
    e1 = complex(d) * (_amp(IDLER_MODE, True, -1j * s) + _amp(SIGNAL_MODE, True, c))
    return e0, e1


@dataclass(frozen=True)
class WWFields:
    """Positive-frequency field parts at the two detectors; conjugates via ``.conj()``."""

    e_a0: FieldExpr
    e_a1: FieldExpr
    e_b0: FieldExpr
    e_b1: FieldExpr

    @property
    def e_a(self) -> FieldExpr:
        return self.e_a0 + self.e_a1

    @property
    def e_b(self) -> FieldExpr:
        return self.e_b0 + self.e_b1


def make_ww_fields(cfg: ExperimentConfig) -> WWFields:
    e_a0, e_a1 = alice_fields(cfg.theta, cfg.d)
    e_b0, e_b1 = bob_fields(cfg.phi, cfg.d)
    return WWFields(e_a0, e_a1, e_b0, e_b1)


def _single_rate(e1: FieldExpr) -> float:
    # antinormal pair carries a factor 2
    return 2.0 * field_expectation([e1.conj(), e1]).real


def single_rates_ww(cfg: ExperimentConfig) -> tuple[float, float]:
    f = make_ww_fields(cfg)
    return _single_rate(f.e_a1), _single_rate(f.e_b1)


def single_rate_ww_local(side: str, angle: float, d: complex) -> float:
    if side == "alice":
        return _single_rate(alice_fields(angle, d)[1])
    if side == "bob":
        return _single_rate(bob_fields(angle, d)[1])
    raise InputError(f"side must be 'alice' or 'bob', got {side!r}")


def signal_correlations(fields: WWFields) -> tuple[complex, complex]:
    """``(<E_A0+ E_B1+>, <E_B0+ E_A1+>)``: the two vacuum-signal cross correlations."""
    return (
        field_expectation([fields.e_a0, fields.e_b1]),
        field_expectation([fields.e_b0, fields.e_a1]),
    )


def coincidence_rate_ww(cfg: ExperimentConfig) -> float:
    """Four times the normally ordered rule: ``2|<E_A0+E_B1+>|^2 + 2|<E_B0+E_A1+>|^2``."""
    x, y = signal_correlations(make_ww_fields(cfg))
    return 2.0 * abs(x) ** 2 + 2.0 * abs(y) ** 2


def rates_ww(cfg: ExperimentConfig) -> tuple[float, float, float]:
    r_a, r_b = single_rates_ww(cfg)
    return r_a, r_b, coincidence_rate_ww(cfg)


@dataclass(frozen=True)
class IntensityBreakdown:
    """Intensity components for one realisation (or arrays over a batch).

    ``i_a1`` and ``i_b1`` are interference terms and can be negative.
    """

    i_a0: np.ndarray | float
    i_a1: np.ndarray | float
    i_a2: np.ndarray | float
    i_b0: np.ndarray | float
    i_b1: np.ndarray | float
    i_b2: np.ndarray | float

    @property
    def i_a(self):
        return self.i_a0 + self.i_a1 + self.i_a2

    @property
    def i_b(self):
        return self.i_b0 + self.i_b1 + self.i_b2


def _split_intensity(e0, e1):
    return np.abs(e0) ** 2, 2.0 * np.real(e0 * np.conj(e1)), np.abs(e1) ** 2


def side_intensities(e0: FieldExpr, e1: FieldExpr, s: VacuumSample | np.ndarray):
    """``(I_0, I_1, I_2)`` of one detector's field on a realisation or batch."""
    return _split_intensity(evaluate(e0, s), evaluate(e1, s))


def intensities_for_sample(fields: WWFields, s: VacuumSample | np.ndarray) -> IntensityBreakdown:
    amps = s.amplitudes if isinstance(s, VacuumSample) else np.asarray(s)
    if amps.shape[-1] < N_MODES:
        raise InputError("sample must cover the signal and idler modes")
    i_a0, i_a1, i_a2 = side_intensities(fields.e_a0, fields.e_a1, amps)
    i_b0, i_b1, i_b2 = side_intensities(fields.e_b0, fields.e_b1, amps)
    if amps.ndim == 1:
        i_a0, i_a1, i_a2, i_b0, i_b1, i_b2 = map(float, (i_a0, i_a1, i_a2, i_b0, i_b1, i_b2))
    return IntensityBreakdown(i_a0, i_a1, i_a2, i_b0, i_b1, i_b2)


def mean_vacuum_intensity(e0: FieldExpr) -> float:
    """``<I_0> = <E_0+ E_0->`` exactly; equals 1/2 for any polariser angle."""
    return field_expectation([e0, e0.conj()]).real
