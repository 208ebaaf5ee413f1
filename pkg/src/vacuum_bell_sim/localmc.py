"""Monte Carlo realisation of the local stochastic (zeropoint-field) detector model.

Every trial draws the two vacuum amplitudes entering the crystal, builds
the fields at each detector and forms background-subtracted detection
probabilities.  Alice's per-trial quantities use only fields at Alice,
Bob's only fields at Bob; correlations come solely from the shared
vacuum draw.

Trials are generated in fixed-size blocks.  Block ``b`` of stream ``s``
always uses the generator ``make_rng(seed, s, b)``, so results depend on
``(seed, n_trials, block_size)`` only, never on how many threads ran the
blocks.  Block partial sums are reduced in block order with
:func:`math.fsum`.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InputError, NumericalError
from .wick import draw_amplitudes, field_expectation, make_rng
from .wwmodel import (
    N_MODES,
    ExperimentConfig,
    WWFields,
    alice_fields,
    bob_fields,
    make_ww_fields,
    side_intensities,
    signal_correlations,
)

#: ``<I_A0> = <I_B0>``: vacuum intensity at a detector, fixed by isotropy of the total ZPF.
MEAN_VACUUM_INTENSITY = 0.5

MIN_TRIALS = 1000
DEFAULT_BLOCK = 1 << 16

ZPF_NONE = "none"
ZPF_INDEPENDENT = "independent-realization"

# stream tags keep the draws of different estimators disjoint
_STREAM_RATES = 0
_STREAM_SINGLE_A = 1
_STREAM_SINGLE_B = 2
_STREAM_CLAMP = 3


def default_threads() -> int:
    """Thread cap from ``VBS_THREADS`` (falls back to the CPU count)."""
    raw = os.environ.get("VBS_THREADS")
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"VBS_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise InputError(f"VBS_THREADS must be a positive integer, got {raw!r}")
    return n


@dataclass(frozen=True)
class DetectorParams:
    """Detector model options.

    The time window is represented by ``window_k``: each trial's net flux
    ``M`` is the mean over ``k`` independent vacuum sub-draws.
    """

    window_k: int = 1
    clamp: bool = False
    zpf_background: str = ZPF_NONE

    def __post_init__(self):
        if int(self.window_k) != self.window_k or self.window_k < 1:
            raise InputError(f"window_k must be a positive integer, got {self.window_k}")
        if self.zpf_background not in (ZPF_NONE, ZPF_INDEPENDENT):
            raise InputError(f"unknown zpf_background {self.zpf_background!r}")


@dataclass(frozen=True)
class Rates:
    r_a: float
    r_b: float
    r_ab: float
    se_a: float
    se_b: float
    se_ab: float
    n_trials: int


@dataclass(frozen=True)
class Moment:
    """Monte Carlo mean with its standard error."""

    mean: float
    se: float


# -- blocked accumulation -----------------------------------------------------

BlockKernel = Callable[[np.random.Generator, int], dict[str, np.ndarray]]


def _block_sizes(n_trials: int, block_size: int) -> list[int]:
    full, rest = divmod(n_trials, block_size)
    return [block_size] * full + ([rest] if rest else [])


def accumulate(
    kernel: BlockKernel,
    n_trials: int,
    seed: int,
    stream: int = 0,
    *,
    block_size: int = DEFAULT_BLOCK,
    threads: int | None = None,
) -> dict[str, Moment]:
    """Means and standard errors of the per-trial columns produced by ``kernel``."""
    if block_size < 1:
        raise InputError("block_size must be positive")
    sizes = _block_sizes(n_trials, block_size)
    threads = default_threads() if threads is None else threads
    if threads < 1:
        raise InputError("threads must be positive")

    def run(b: int):
        cols = kernel(make_rng(seed, stream, b), sizes[b])
        out = {}
        # non-finite columns are reported after the merge
        with np.errstate(invalid="ignore", over="ignore"):
            for name, x in cols.items():
                x = np.asarray(x, dtype=float)
                m = float(x.mean())
                out[name] = (x.size, float(x.sum()), float(((x - m) ** 2).sum()), m)
        return out

    if threads == 1 or len(sizes) == 1:
        parts = [run(b) for b in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=min(threads, len(sizes))) as pool:
            parts = list(pool.map(run, range(len(sizes))))

    result = {}
    for name in parts[0]:
        n = sum(p[name][0] for p in parts)
        mean = math.fsum(p[name][1] for p in parts) / n
        m2 = math.fsum(p[name][2] + p[name][0] * (p[name][3] - mean) ** 2 for p in parts)
        var = m2 / (n - 1) if n > 1 else 0.0
        se = math.sqrt(max(var, 0.0) / n)
        if not (math.isfinite(mean) and math.isfinite(se)):
            raise NumericalError(f"non-finite Monte Carlo accumulation in {name!r}")
        result[name] = Moment(mean, se)
    return result


def _check_trials(n_trials: int):
    if int(n_trials) != n_trials or n_trials < MIN_TRIALS:
        raise InputError(f"n_trials must be an integer >= {MIN_TRIALS}, got {n_trials}")


# -- per-trial columns ----------------------------------------------------------


def _antithetic(fn):
    """Average ``fn`` over a draw and its copy rotated by a common quarter turn.

    ``a -> i a`` preserves the vacuum distribution and flips the sign of the
    interference intensities ``I_1`` while leaving ``I_0`` and ``I_2`` unchanged.
    """

    def paired(amps):
        x, y = fn(amps), fn(1j * amps)
        return {key: 0.5 * (x[key] + y[key]) for key in x}

    return paired


def _windowed(rng, n, k, fn, antithetic=False):
    """Mean of ``fn(amps)`` over ``k`` independent sub-draws, column by column."""
    if antithetic:
        fn = _antithetic(fn)
    acc = None
    for _ in range(k):
        cols = fn(draw_amplitudes(rng, n, N_MODES))
        if acc is None:
            acc = {key: np.array(v, dtype=float) for key, v in cols.items()}
        else:
            for key, v in cols.items():
                acc[key] += v
    if k > 1:
        for key in acc:
            acc[key] /= k
    return acc


def _columns(fields: WWFields, amps: np.ndarray, mean_a0: float, mean_b0: float, mean_a2=None, mean_b2=None):
    i_a0, i_a1, i_a2 = side_intensities(fields.e_a0, fields.e_a1, amps)
    i_b0, i_b1, i_b2 = side_intensities(fields.e_b0, fields.e_b1, amps)
    if mean_a2 is None:
        r_ab = (i_a0 - mean_a0) * i_b2 + (i_b0 - mean_b0) * i_a2
    else:
        # centred in both factors: the delta-method influence of the sample covariance
        r_ab = (i_a0 - mean_a0) * (i_b2 - mean_b2) + (i_b0 - mean_b0) * (i_a2 - mean_a2)
    i_a = i_a0 + i_a1 + i_a2
    i_b = i_b0 + i_b1 + i_b2
    expanded = i_a * i_b - i_a0 * i_b0 - i_a1 * i_b1 - i_a2 * mean_b0 - i_b2 * mean_a0
    return {
        "r_a": i_a1 + i_a2,
        "r_b": i_b1 + i_b2,
        "r_ab": r_ab,
        "r_ab_expanded": expanded,
        "r_ab_diff": r_ab - expanded,
        "i_a0": i_a0,
        "i_a1": i_a1,
        "i_a2": i_a2,
        "i_b0": i_b0,
        "i_b1": i_b1,
        "i_b2": i_b2,
        "i_a1_i_b1": i_a1 * i_b1,
    }


def estimate_observables(
    cfg: ExperimentConfig,
    n_trials: int,
    seed: int,
    *,
    det: DetectorParams | None = None,
    plug_in: str = "analytic",
    antithetic: bool = False,
    block_size: int = DEFAULT_BLOCK,
    threads: int | None = None,
) -> dict[str, Moment]:
    """All per-trial observables of the unclamped model with their standard errors.

    Columns: ``r_a``, ``r_b``, ``r_ab`` (covariance form), ``r_ab_expanded``
    (product-moment form with the ``I_A1 I_B1`` term dropped), their paired
    difference ``r_ab_diff``, the six
    intensity components and ``i_a1_i_b1``.

    ``plug_in='analytic'`` centres ``I_A0``/``I_B0`` on their exact mean 1/2;
    ``plug_in='sample'`` uses the sample means instead (a second pass over
    the same draws), giving the sample-covariance estimator.

    ``antithetic=True`` makes each trial a vacuum draw plus its quarter-turn
    rotated partner; the interference terms then cancel within the trial.
    """
    _check_trials(n_trials)
    det = det or DetectorParams()
    if det.clamp:
        raise InputError("the unclamped estimator was requested with clamp enabled; use clamp_study")
    if plug_in not in ("analytic", "sample"):
        raise InputError(f"plug_in must be 'analytic' or 'sample', got {plug_in!r}")
    fields = make_ww_fields(cfg)
    k = det.window_k

    def kernel(m_a0, m_b0, m_a2=None, m_b2=None):
        return lambda rng, n: _windowed(
            rng, n, k, lambda amps: _columns(fields, amps, m_a0, m_b0, m_a2, m_b2), antithetic
        )

    opts = dict(block_size=block_size, threads=threads)
    res = accumulate(kernel(MEAN_VACUUM_INTENSITY, MEAN_VACUUM_INTENSITY), n_trials, seed, _STREAM_RATES, **opts)
    if plug_in == "sample":
        means = [res[c].mean for c in ("i_a0", "i_b0", "i_a2", "i_b2")]
        second = accumulate(kernel(*means), n_trials, seed, _STREAM_RATES, **opts)
        res["r_ab"] = second["r_ab"]
    return res


def estimate_rates(
    cfg: ExperimentConfig,
    det: DetectorParams | None = None,
    n_trials: int = 1_000_000,
    seed: int = 1,
    *,
    plug_in: str = "analytic",
    antithetic: bool = False,
    block_size: int = DEFAULT_BLOCK,
    threads: int | None = None,
) -> Rates:
    """Background-subtracted single and coincidence rates of the local model.

    Per trial: ``R_A <- I_A - I_A0``, ``R_B <- I_B - I_B0`` and
    ``R_AB <- (I_A0 - <I_A0>) I_B2 + (I_B0 - <I_B0>) I_A2``.
    """
    res = estimate_observables(
        cfg, n_trials, seed, det=det, plug_in=plug_in, antithetic=antithetic,
        block_size=block_size, threads=threads,
    )
    return Rates(
        res["r_a"].mean, res["r_b"].mean, res["r_ab"].mean,
        res["r_a"].se, res["r_b"].se, res["r_ab"].se,
        int(n_trials),
    )


def estimate_single(
    side: str,
    angle: float,
    d: complex,
    n_trials: int = 1_000_000,
    seed: int = 1,
    *,
    antithetic: bool = False,
    block_size: int = DEFAULT_BLOCK,
    threads: int | None = None,
) -> Moment:
    """Single rate of one detector simulated from its own polariser angle only."""
    _check_trials(n_trials)
    if side == "alice":
        e0, e1 = alice_fields(angle, d)
        stream = _STREAM_SINGLE_A
    elif side == "bob":
        e0, e1 = bob_fields(angle, d)
        stream = _STREAM_SINGLE_B
    else:
        raise InputError(f"side must be 'alice' or 'bob', got {side!r}")

    def columns(amps):
        _, i1, i2 = side_intensities(e0, e1, amps)
        return {"r": i1 + i2}

    def kernel(rng, n):
        return _windowed(rng, n, 1, columns, antithetic)

    return accumulate(kernel, n_trials, seed, stream, block_size=block_size, threads=threads)["r"]


def analytic_targets(cfg: ExperimentConfig) -> tuple[float, float, float]:
    """Exact local-model rates via the Wick engine.

    ``R_A = <I_A1> + <I_A2>``, ``R_B`` likewise and
    ``R_AB = |<E_A0+E_B1+>|^2 + |<E_A1+E_B0+>|^2``.
    """
    f = make_ww_fields(cfg)

    def single(e0, e1):
        i1 = field_expectation([e0, e1.conj()]) + field_expectation([e1, e0.conj()])
        i2 = field_expectation([e1, e1.conj()])
        return (i1 + i2).real

    x, y = signal_correlations(f)
    return single(f.e_a0, f.e_a1), single(f.e_b0, f.e_b1), abs(x) ** 2 + abs(y) ** 2


# -- positivity clamp -------------------------------------------------------------


@dataclass(frozen=True)
class ClampStudy:
    """Outcome of the clamped-detector study.

    ``clamped``: ``<[M_A]+>``, ``<[M_B]+>``, ``<[M_A]+[M_B]+>``.
    ``unclamped``: the same moments without the clamp on the same draws.
    ``baseline``: clamped moments with the pump off (D = 0), same draws;
    its ``r_ab`` is the residual no-pump coincidence of this construction.
    ``activation_fraction``: share of detector evaluations where ``M < 0``.
    """

    clamped: Rates
    unclamped: Rates
    baseline: Rates
    activation_fraction: float

    @property
    def excess(self) -> tuple[float, float, float]:
        """Clamped rates minus their no-pump baseline."""
        c, b = self.clamped, self.baseline
        return c.r_a - b.r_a, c.r_b - b.r_b, c.r_ab - b.r_ab


def clamp_study(
    cfg: ExperimentConfig,
    det: DetectorParams,
    n_trials: int,
    seed: int,
    *,
    block_size: int = DEFAULT_BLOCK,
    threads: int | None = None,
) -> ClampStudy:
    """Detection with the positivity clamp ``[M]+`` applied per trial.

    The ZPF flux at each detector is modelled as ``-I'_0`` with ``I'_0``
    computed from an independent vacuum realisation through the same
    polariser, so ``<I_ZPF + I_0> = 0`` holds on average.
    """
    _check_trials(n_trials)
    if not det.clamp:
        raise InputError("clamp_study requires DetectorParams(clamp=True)")
    if det.zpf_background != ZPF_INDEPENDENT:
        raise InputError(f"clamp_study requires zpf_background={ZPF_INDEPENDENT!r}")
    fields = make_ww_fields(cfg)
    k = det.window_k

    def kernel(rng, n):
        m = {key: np.zeros(n) for key in ("a", "b", "a0", "b0")}
        for _ in range(k):
            amps = draw_amplitudes(rng, n, N_MODES)
            background = draw_amplitudes(rng, n, N_MODES)
            a0, a1, a2 = side_intensities(fields.e_a0, fields.e_a1, amps)
            b0, b1, b2 = side_intensities(fields.e_b0, fields.e_b1, amps)
            zpf_a = -side_intensities(fields.e_a0, fields.e_a1, background)[0]
            zpf_b = -side_intensities(fields.e_b0, fields.e_b1, background)[0]
            m["a"] += zpf_a + a0 + a1 + a2
            m["b"] += zpf_b + b0 + b1 + b2
            m["a0"] += zpf_a + a0
            m["b0"] += zpf_b + b0
        for key in m:
            m[key] /= k
        pa, pb = np.maximum(m["a"], 0.0), np.maximum(m["b"], 0.0)
        pa0, pb0 = np.maximum(m["a0"], 0.0), np.maximum(m["b0"], 0.0)
        return {
            "c_a": pa, "c_b": pb, "c_ab": pa * pb,
            "u_a": m["a"], "u_b": m["b"], "u_ab": m["a"] * m["b"],
            "z_a": pa0, "z_b": pb0, "z_ab": pa0 * pb0,
            "fired": 0.5 * ((m["a"] < 0).astype(float) + (m["b"] < 0).astype(float)),
        }

    res = accumulate(kernel, n_trials, seed, _STREAM_CLAMP, block_size=block_size, threads=threads)

    def rates(prefix):
        a, b, ab = (res[prefix + s] for s in ("a", "b", "ab"))
        return Rates(a.mean, b.mean, ab.mean, a.se, b.se, ab.se, int(n_trials))

    return ClampStudy(rates("c_"), rates("u_"), rates("z_"), res["fired"].mean)


# -- multimode dephasing of the interference term -------------------------------

UNIFORM = "uniform"
GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class PhaseModel:
    """Distribution of the relative phase between Alice-Bob cross correlations.

    ``uniform``: phase uniform on ``[-w/2, w/2]``, factor ``sinc(w/2)``.
    ``gaussian``: phase normal with std ``w``, factor ``exp(-w^2/2)``.
    """

    spread_w: float
    distribution: str = UNIFORM

    def __post_init__(self):
        if not (math.isfinite(self.spread_w) and self.spread_w >= 0):
            raise InputError(f"spread must be finite and non-negative, got {self.spread_w}")
        if self.distribution not in (UNIFORM, GAUSSIAN):
            raise InputError(f"unknown phase distribution {self.distribution!r}")

    @property
    def suppression_factor(self) -> complex:
        w = self.spread_w
        if self.distribution == GAUSSIAN:
            return complex(math.exp(-0.5 * w * w))
        # np.sinc(x) = sin(pi x) / (pi x)
        return complex(np.sinc(w / (2 * math.pi)))


@dataclass(frozen=True)
class PhaseScanRow:
    spread_w: float
    cross_term: float
    signal_term: float


def interference_factors(cfg: ExperimentConfig) -> tuple[complex, complex]:
    """``C1 = <E_A0+ E_B0->`` and ``C2 = <E_A1- E_B1+>``."""
    f = make_ww_fields(cfg)
    return (
        field_expectation([f.e_a0, f.e_b0.conj()]),
        field_expectation([f.e_a1.conj(), f.e_b1]),
    )


def phase_suppression_scan(
    cfg: ExperimentConfig, spreads: Sequence[float], distribution: str = UNIFORM
) -> list[PhaseScanRow]:
    """Interference term ``<I_A1 I_B1>`` under growing phase spread, next to the signal term."""
    c1, c2 = interference_factors(cfg)
    x, y = signal_correlations(make_ww_fields(cfg))
    signal = 2.0 * abs(x) ** 2 + 2.0 * abs(y) ** 2
    rows = []
    for w in spreads:
        factor = PhaseModel(float(w), distribution).suppression_factor
        rows.append(PhaseScanRow(float(w), 2.0 * (c1 * c2 * factor).real, signal))
    return rows
