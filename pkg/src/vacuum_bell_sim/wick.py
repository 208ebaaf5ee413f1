"""Gaussian moment calculus for the vacuum Wigner distribution.

Each vacuum mode amplitude ``a_j`` is a circular complex Gaussian with
``<a_j a_k*> = delta_jk / 2`` and ``<a_j a_k> = <a_j* a_k*> = 0``.  Exact
expectations of polynomials in the amplitudes follow from Isserlis/Wick
pair matching; the sampler draws the same distribution for Monte Carlo
cross-checks.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from itertools import product
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError

#: Vacuum pair value <a_j a_j*>.  Every normalisation in the package flows from it.
PAIR_VALUE = 0.5

#: Standard deviation of Re(a_j) and Im(a_j) (variance 1/4 each).
_QUADRATURE_STD = np.sqrt(PAIR_VALUE / 2.0)

Factor = tuple[int, bool]


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for ``seed``; ``key`` selects an independent stream.

    Streams with distinct keys are statistically independent, which is what
    parallel chunks rely on.
    """
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Monomial:
    """Product of mode amplitudes; ``factors`` holds ``(mode, conjugated)`` pairs."""

    factors: tuple[Factor, ...]

    @classmethod
    def of(cls, *factors: Factor) -> "Monomial":
        return cls(tuple((int(m), bool(c)) for m, c in factors))

    def canonical(self) -> "Monomial":
        return Monomial(tuple(sorted(self.factors)))

    @property
    def degree(self) -> int:
        return len(self.factors)


def _count_matchings(unconj: list[int], conj: list[int]) -> int:
    # first unconjugated factor is paired with every compatible conjugated one
    if not unconj:
        return 0 if conj else 1
    head, rest = unconj[0], unconj[1:]
    total = 0
    for k, mode in enumerate(conj):
        if mode == head:
            total += _count_matchings(rest, conj[:k] + conj[k + 1 :])
    return total


def monomial_expectation(m: Monomial) -> complex:
    """Exact vacuum expectation of a monomial in the mode amplitudes."""
    unconj = [mode for mode, c in m.factors if not c]
    conj = [mode for mode, c in m.factors if c]
    if Counter(unconj) != Counter(conj):
        return 0j
    n_pairs = len(unconj)
    return complex(_count_matchings(sorted(unconj), sorted(conj)) * PAIR_VALUE**n_pairs)


class FieldExpr:
    """Linear form over mode amplitudes and their conjugates.

    ``terms`` maps ``(mode, conjugated)`` to a complex coefficient.  Supports
    addition, scalar multiplication and conjugation, which is enough to
    build detector fields out of the two down-converted modes.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Factor, complex] | None = None):
        clean: dict[Factor, complex] = {}
        for (mode, conj), coeff in (terms or {}).items():
            if int(mode) < 0:
                raise InputError(f"mode index must be non-negative, got {mode}")
            coeff = complex(coeff)
            if coeff != 0:
                clean[(int(mode), bool(conj))] = coeff
        self.terms = clean

    @classmethod
    def amplitude(cls, mode: int, conjugated: bool = False, coeff: complex = 1.0) -> "FieldExpr":
        return cls({(mode, conjugated): coeff})

    @classmethod
    def zero(cls) -> "FieldExpr":
        return cls()

    def __add__(self, other: "FieldExpr") -> "FieldExpr":
        if not isinstance(other, FieldExpr):
            return NotImplemented
        out = dict(self.terms)
        for key, coeff in other.terms.items():
            out[key] = out.get(key, 0j) + coeff
        return FieldExpr(out)

    def __sub__(self, other: "FieldExpr") -> "FieldExpr":
        return self + (-1.0) * other

    def __mul__(self, scalar: complex) -> "FieldExpr":
        if isinstance(scalar, FieldExpr):
            return NotImplemented
        scalar = complex(scalar)
        return FieldExpr({k: scalar * v for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __neg__(self) -> "FieldExpr":
        return (-1.0) * self

    def conj(self) -> "FieldExpr":
        """Complex conjugate: flips every conjugation flag and conjugates coefficients."""
        return FieldExpr({(m, not c): v.conjugate() for (m, c), v in self.terms.items()})

    @property
    def modes(self) -> set[int]:
        return {m for m, _ in self.terms}

    @property
    def max_mode(self) -> int:
        return max(self.modes, default=-1)

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FieldExpr):
            return NotImplemented
        return self.terms == other.terms

    def allclose(self, other: "FieldExpr", atol: float = 1e-15) -> bool:
        keys = set(self.terms) | set(other.terms)
        return all(abs(self.terms.get(k, 0j) - other.terms.get(k, 0j)) <= atol for k in keys)

    def __repr__(self) -> str:
        if not self.terms:
            return "FieldExpr(0)"
        parts = [f"({v:.6g})*a{m}{'*' if c else ''}" for (m, c), v in sorted(self.terms.items())]
        return "FieldExpr(" + " + ".join(parts) + ")"


def expand_product(fields: Sequence[FieldExpr]) -> dict[Monomial, complex]:
    """Expand a product of linear forms into canonical monomials with coefficients."""
    out: dict[Monomial, complex] = {}
    for combo in product(*(sorted(f.terms.items()) for f in fields)):
        coeff = 1.0 + 0j
        for _, c in combo:
            coeff *= c
        mono = Monomial(tuple(sorted(key for key, _ in combo)))
        out[mono] = out.get(mono, 0j) + coeff
    return out


def field_expectation(fields: Sequence[FieldExpr]) -> complex:
    """Exact vacuum expectation of the product of the given linear forms."""
    if len(fields) < 1:
        raise InputError("field_expectation needs at least one field")
    total = 0j
    for mono, coeff in sorted(expand_product(fields).items(), key=lambda kv: kv[0].factors):
        value = monomial_expectation(mono)
        if value:
            total += coeff * value
    return total


@dataclass(frozen=True)
class VacuumSample:
    """Vacuum amplitudes drawn from the Wigner distribution.

    ``amplitudes`` has shape ``(n_modes,)`` for one realisation or
    ``(n_draws, n_modes)`` for a batch.
    """

    amplitudes: np.ndarray

    @property
    def n_modes(self) -> int:
        return int(self.amplitudes.shape[-1])

    def __len__(self) -> int:
        return self.n_modes


def draw_amplitudes(rng: np.random.Generator, n_draws: int, n_modes: int) -> np.ndarray:
    """``(n_draws, n_modes)`` complex array of independent vacuum amplitudes."""
    if n_modes < 0 or n_draws < 0:
        raise InputError("n_draws and n_modes must be non-negative")
    quad = rng.standard_normal((n_draws, n_modes, 2))
    quad *= _QUADRATURE_STD
    return quad[..., 0] + 1j * quad[..., 1]


def sample_vacuum(n_modes: int, seed: int) -> VacuumSample:
    """One vacuum realisation of ``n_modes`` amplitudes, deterministic in ``seed``."""
    if n_modes < 0:
        raise InputError(f"n_modes must be >= 0, got {n_modes}")
    return VacuumSample(draw_amplitudes(make_rng(seed), 1, n_modes)[0])


def sample_vacuum_batch(n_modes: int, n_draws: int, seed: int, *key: int) -> VacuumSample:
    """``n_draws`` independent realisations of ``n_modes`` amplitudes."""
    return VacuumSample(draw_amplitudes(make_rng(seed, *key), n_draws, n_modes))


def evaluate(f: FieldExpr, s: VacuumSample | np.ndarray) -> complex | np.ndarray:
    """Numeric value of ``f`` on a realisation (or a batch of realisations)."""
    amps = s.amplitudes if isinstance(s, VacuumSample) else np.asarray(s)
    n_modes = amps.shape[-1] if amps.ndim else 0
    if f.max_mode >= n_modes:
        raise InputError(f"field uses mode {f.max_mode} but the sample has {n_modes} modes")
    out: complex | np.ndarray = np.zeros(amps.shape[:-1], dtype=complex) if amps.ndim > 1 else 0j
    for (mode, conj), coeff in sorted(f.terms.items()):
        a = amps[..., mode]
        out = out + coeff * (np.conj(a) if conj else a)
    return complex(out) if np.ndim(out) == 0 else out


def monomial_values(m: Monomial, s: VacuumSample | np.ndarray) -> np.ndarray:
    """Monomial evaluated on every realisation of a batch."""
    amps = s.amplitudes if isinstance(s, VacuumSample) else np.asarray(s)
    out = np.ones(amps.shape[:-1], dtype=complex)
    for mode, conj in m.factors:
        a = amps[..., mode]
        out = out * (np.conj(a) if conj else a)
    return out


def random_monomial(rng: np.random.Generator, max_degree: int, n_modes: int) -> Monomial:
    """Uniformly random monomial used by property checks."""
    degree = int(rng.integers(0, max_degree + 1))
    modes = rng.integers(0, n_modes, size=degree)
    conj = rng.integers(0, 2, size=degree).astype(bool)
    return Monomial.of(*zip(modes.tolist(), conj.tolist()))


def balanced_monomial(rng: np.random.Generator, max_degree: int, n_modes: int) -> Monomial:
    """Random monomial with equal conjugated/plain counts per mode, shuffled."""
    n_pairs = int(rng.integers(1, max_degree // 2 + 1))
    modes = rng.integers(0, n_modes, size=n_pairs).tolist()
    factors: list[Factor] = [(m, False) for m in modes] + [(m, True) for m in modes]
    order = rng.permutation(len(factors))
    return Monomial(tuple(factors[k] for k in order))

