"""Clauser-Horne inequality tests, angle scans and the detection-efficiency threshold.

A rate source answers three questions: Alice's single rate at one angle,
Bob's single rate at one angle, and the coincidence rate at a pair of
angles.  The single-rate methods take exactly one angle; subclasses that
try to give them more parameters are rejected when the class is defined,
so a marginal can never depend on the remote setting.
"""

from __future__ import annotations

import inspect
import itertools
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import fock, localmc, wwmodel
from .errors import InputError

SQRT2 = math.sqrt(2.0)
#: CH ratio rhs/lhs at the canonical angles for rates of the form K, K cos^2(theta - phi).
CANONICAL_RATIO = 0.5 * (1.0 + SQRT2)


@dataclass(frozen=True)
class AngleSet:
    theta1: float
    theta2: float
    phi1: float
    phi2: float

    def __post_init__(self):
        for name in ("theta1", "theta2", "phi1", "phi2"):
            if not math.isfinite(getattr(self, name)):
                raise InputError(f"{name} must be finite")

    def rotated(self, delta: float) -> "AngleSet":
        return AngleSet(self.theta1 + delta, self.theta2 + delta, self.phi1 + delta, self.phi2 + delta)


CANONICAL_ANGLES = AngleSet(theta1=math.pi / 4, theta2=0.0, phi1=math.pi / 8, phi2=3 * math.pi / 8)


class Measured(NamedTuple):
    value: float
    se: float = 0.0


class RateSource(ABC):
    """Maps polariser settings to detection rates."""

    name = "source"

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        for method in ("single_a", "single_b"):
            if method in cls.__dict__:
                params = list(inspect.signature(cls.__dict__[method]).parameters.values())[1:]
                if len(params) != 1 or params[0].kind not in (
                    inspect.Parameter.POSITIONAL_ONLY,
                    inspect.Parameter.POSITIONAL_OR_KEYWORD,
                ):
                    raise TypeError(f"{cls.__name__}.{method} must take exactly one angle")

    @abstractmethod
    def single_a(self, theta: float) -> Measured: ...

    @abstractmethod
    def single_b(self, phi: float) -> Measured: ...

    @abstractmethod
    def coincidence(self, theta: float, phi: float) -> Measured: ...

    @property
    def d(self) -> complex | None:
        return None

    @property
    def trials(self) -> int | None:
        return None

    def rates(self, theta: float, phi: float) -> tuple[Measured, Measured, Measured]:
        return self.single_a(theta), self.single_b(phi), self.coincidence(theta, phi)


class ClosedFormSource(RateSource):
    """``<theta> = <phi> = K`` and ``<theta phi> = K cos^2(theta - phi)``."""

    name = "closed-form"

    def __init__(self, k: float = 1.0):
        if not (math.isfinite(k) and k > 0):
            raise InputError(f"K must be positive, got {k}")
        self.k = float(k)

    def single_a(self, theta):
        return Measured(self.k)

    def single_b(self, phi):
        return Measured(self.k)

    def coincidence(self, theta, phi):
        return Measured(self.k * math.cos(theta - phi) ** 2)


class FockSource(RateSource):
    name = "fock"

    def __init__(self, d: complex = 0.1, n_max: int = fock.DEFAULT_NMAX):
        self._d = complex(d)
        self.n_max = n_max
        self._basis = fock.FockBasis(n_max)

    @property
    def d(self):
        return self._d

    def single_a(self, theta):
        return Measured(fock.single_rate_hs_local("alice", theta, self._d, self.n_max))

    def single_b(self, phi):
        return Measured(fock.single_rate_hs_local("bob", phi, self._d, self.n_max))

    def coincidence(self, theta, phi):
        alice, bob = fock.build_detector_fields(self._basis, theta, phi, self._d)
        return Measured(fock.coincidence_rate_hs(alice, bob))


class WWSource(RateSource):
    name = "ww"

    def __init__(self, d: complex = 0.1):
        self._d = wwmodel.ExperimentConfig(0.0, 0.0, d).d

    @property
    def d(self):
        return self._d

    def single_a(self, theta):
        return Measured(wwmodel.single_rate_ww_local("alice", theta, self._d))

    def single_b(self, phi):
        return Measured(wwmodel.single_rate_ww_local("bob", phi, self._d))

    def coincidence(self, theta, phi):
        return Measured(wwmodel.coincidence_rate_ww(wwmodel.ExperimentConfig(theta, phi, self._d)))


class LocalMCSource(RateSource):
    """Monte Carlo local model; every query is an independent run with its own seed.

    Antithetic pairing is on by default: without it the order-D interference
    term dominates the single-rate error bars.
    """

    name = "mc"

    def __init__(
        self,
        d: complex = 0.1,
        n_trials: int = 1_000_000,
        seed: int = 1,
        det: localmc.DetectorParams | None = None,
        threads: int | None = None,
        antithetic: bool = True,
    ):
        self._d = wwmodel.ExperimentConfig(0.0, 0.0, d).d
        self.antithetic = bool(antithetic)
        self.n_trials = int(n_trials)
        self.seed = int(seed)
        self.det = det or localmc.DetectorParams()
        self.threads = threads

    @property
    def d(self):
        return self._d

    @property
    def trials(self):
        return self.n_trials

    def _seed(self, *angles: float) -> int:
        # deterministic per setting, distinct across settings
        bits = np.array(angles, dtype=np.float64).view(np.uint64).tolist()
        return int(np.random.SeedSequence([self.seed, *bits]).generate_state(2, np.uint64)[0])

    def single_a(self, theta):
        m = localmc.estimate_single("alice", theta, self._d, self.n_trials, self._seed(0, theta),
                                   antithetic=self.antithetic, threads=self.threads)
        return Measured(m.mean, m.se)

    def single_b(self, phi):
        m = localmc.estimate_single("bob", phi, self._d, self.n_trials, self._seed(1, phi),
                                   antithetic=self.antithetic, threads=self.threads)
        return Measured(m.mean, m.se)

    def _run(self, theta, phi) -> localmc.Rates:
        cfg = wwmodel.ExperimentConfig(theta, phi, self._d)
        return localmc.estimate_rates(cfg, self.det, self.n_trials, self._seed(2, theta, phi),
                                      antithetic=self.antithetic, threads=self.threads)

    def coincidence(self, theta, phi):
        r = self._run(theta, phi)
        return Measured(r.r_ab, r.se_ab)

    def rates(self, theta, phi):
        r = self._run(theta, phi)
        return Measured(r.r_a, r.se_a), Measured(r.r_b, r.se_b), Measured(r.r_ab, r.se_ab)


def make_source(backend: str, d: complex = 0.1, **kwargs) -> RateSource:
    if backend == "fock":
        return FockSource(d, kwargs.get("n_max", fock.DEFAULT_NMAX))
    if backend == "ww":
        return WWSource(d)
    if backend == "mc":
        return LocalMCSource(
            d, kwargs.get("n_trials", 1_000_000), kwargs.get("seed", 1), kwargs.get("det"),
            kwargs.get("threads"), kwargs.get("antithetic", True),
        )
    if backend == "closed-form":
        return ClosedFormSource(kwargs.get("k", 1.0))
    raise InputError(f"unknown backend {backend!r}")


@dataclass(frozen=True)
class CHReport:
    lhs: float
    rhs: float
    violated: bool
    ratio: float
    margin_se: float | None = None
    eta_a: float = 1.0
    eta_b: float = 1.0

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


#: Required violation margin, in standard errors, for statistical sources.
VIOLATION_SIGMAS = 3.0
#: Relative slack below which exact sources count as saturating, not violating.
ROUNDOFF_GUARD = 1e-12


def _check_eta(name: str, eta: float):
    if not (math.isfinite(eta) and 0.0 <= eta <= 1.0):
        raise InputError(f"{name} must lie in [0, 1], got {eta}")


def ch_report(src: RateSource, angles: AngleSet = CANONICAL_ANGLES, eta_a: float = 1.0, eta_b: float = 1.0) -> CHReport:
    """Evaluate ``<t1> + <p1> >= <t1 p1> + <t1 p2> + <t2 p1> - <t2 p2>``.

    Singles are scaled by their detector efficiency and coincidences by the
    product.  With statistical errors present a violation additionally
    requires ``rhs - lhs > 3 * margin_se``.
    """
    _check_eta("eta_a", eta_a)
    _check_eta("eta_b", eta_b)
    a = src.single_a(angles.theta1)
    b = src.single_b(angles.phi1)
    c11 = src.coincidence(angles.theta1, angles.phi1)
    c12 = src.coincidence(angles.theta1, angles.phi2)
    c21 = src.coincidence(angles.theta2, angles.phi1)
    c22 = src.coincidence(angles.theta2, angles.phi2)
    ee = eta_a * eta_b
    lhs = eta_a * a.value + eta_b * b.value
    rhs = ee * (c11.value + c12.value + c21.value - c22.value)
    var = (eta_a * a.se) ** 2 + (eta_b * b.se) ** 2 + ee**2 * sum(c.se**2 for c in (c11, c12, c21, c22))
    ratio = rhs / lhs if lhs != 0 else math.nan
    if var > 0:
        margin_se = math.sqrt(var)
        violated = rhs - lhs > VIOLATION_SIGMAS * margin_se
    else:
        margin_se = None
        # ties that differ only by round-off are not violations
        violated = rhs - lhs > ROUNDOFF_GUARD * max(abs(lhs), abs(rhs))
    return CHReport(lhs, rhs, bool(violated), ratio, margin_se, eta_a, eta_b)


def efficiency_threshold(symmetric: bool = True, eta_fixed: float | None = None) -> float:
    """Smallest efficiency allowing a CH violation at the canonical angles.

    Symmetric: the ``eta`` solving ``2 eta = (1 + sqrt 2) eta^2``.  Otherwise
    the minimal ``eta_B`` with ``eta_A + eta_B = (1 + sqrt 2) eta_A eta_B``
    at ``eta_A = eta_fixed``.
    """
    if symmetric:
        return 2.0 / (1.0 + SQRT2)
    if eta_fixed is None or not math.isfinite(eta_fixed):
        raise InputError("asymmetric threshold needs a finite eta_fixed")
    if not (1.0 / SQRT2 < eta_fixed <= 1.0):
        raise InputError(f"eta_fixed must lie in (1/sqrt(2), 1], got {eta_fixed}")
    return eta_fixed / ((1.0 + SQRT2) * eta_fixed - 1.0)


@dataclass(frozen=True)
class AngleGrid:
    """Ordered list of ``(theta, phi)`` settings."""

    pairs: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.pairs:
            raise InputError("angle grid is empty")
        for t, p in self.pairs:
            if not (math.isfinite(t) and math.isfinite(p)):
                raise InputError("angle grid contains non-finite angles")

    @classmethod
    def product(cls, thetas: Sequence[float], phis: Sequence[float]) -> "AngleGrid":
        return cls(tuple((float(t), float(p)) for t, p in itertools.product(thetas, phis)))

    @classmethod
    def sweep(cls, n: int, phi: float = 0.0, span: float = math.pi) -> "AngleGrid":
        """``theta = phi + j * span / (n - 1)`` for ``j = 0..n-1`` (``theta = phi`` when ``n == 1``)."""
        if n < 1:
            raise InputError("grid needs at least one point")
        steps = [0.0] if n == 1 else [j * span / (n - 1) for j in range(n)]
        return cls(tuple((phi + s, float(phi)) for s in steps))

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)


@dataclass(frozen=True)
class ScanRow:
    theta: float
    phi: float
    r_a: float
    r_b: float
    r_ab: float
    se_ab: float


def angle_scan(src: RateSource, grid: AngleGrid) -> list[ScanRow]:
    rows = []
    for theta, phi in grid:
        a, b, ab = src.rates(theta, phi)
        rows.append(ScanRow(theta, phi, a.value, b.value, ab.value, ab.se))
    return rows


def maximize_ch_ratio(src: RateSource, grid_points: int = 9, refine_rounds: int = 30) -> tuple[AngleSet, float]:
    """Largest CH ratio over all four angles: exhaustive grid, then pattern refinement.

    Intended for deterministic sources; costs grow as ``grid_points ** 4``.
    """
    if grid_points < 2:
        raise InputError("grid_points must be >= 2")
    # common rotations leave the ratio unchanged, so theta2 is pinned at 0
    axis = np.linspace(0.0, math.pi, grid_points, endpoint=False)

    def score(t1, p1, p2):
        return ch_report(src, AngleSet(t1, 0.0, p1, p2)).ratio

    best = max(((score(t1, p1, p2), (t1, p1, p2)) for t1 in axis for p1 in axis for p2 in axis), key=lambda x: x[0])
    value, point = best
    step = math.pi / grid_points
    for _ in range(refine_rounds):
        improved = False
        for dim in range(3):
            for sign in (1.0, -1.0):
                trial = list(point)
                trial[dim] += sign * step
                v = score(*trial)
                if v > value:
                    value, point, improved = v, tuple(trial), True
        if not improved:
            step /= 2
    t1, p1, p2 = point
    return AngleSet(t1, 0.0, p1, p2), value
