"""Truncated two-mode Fock space: an operator-algebra oracle for the detection rates.

Basis states are ``|n_s, n_i>`` with ``0 <= n_s, n_i <= n_max``; the flat
index of ``|n_s, n_i>`` is ``n_s * (n_max + 1) + n_i``.  Nothing here uses
the phase-space machinery of :mod:`vacuum_bell_sim.wick`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import InputError

SIGNAL = "signal"
IDLER = "idler"

DEFAULT_NMAX = 3


@dataclass(frozen=True)
class FockBasis:
    n_max: int = DEFAULT_NMAX

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise InputError(f"n_max must be an integer >= 1, got {self.n_max}")

    @property
    def dim(self) -> int:
        return (self.n_max + 1) ** 2

    def index(self, n_s: int, n_i: int) -> int:
        if not (0 <= n_s <= self.n_max and 0 <= n_i <= self.n_max):
            raise InputError(f"occupation ({n_s}, {n_i}) outside truncation n_max={self.n_max}")
        return n_s * (self.n_max + 1) + n_i

    def occupations(self, index: int) -> tuple[int, int]:
        return divmod(index, self.n_max + 1)

    def ket(self, n_s: int, n_i: int) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index(n_s, n_i)] = 1.0
        return v

    def vacuum(self) -> np.ndarray:
        return self.ket(0, 0)


@dataclass(frozen=True)
class FockOperator:
    basis: FockBasis
    matrix: sparse.csr_matrix

    def __post_init__(self):
        if self.matrix.shape != (self.basis.dim, self.basis.dim):
            raise InputError("operator shape does not match its basis")

    def _check(self, other: "FockOperator"):
        if other.basis != self.basis:
            raise InputError("operators live on different bases")

    def __add__(self, other: "FockOperator") -> "FockOperator":
        self._check(other)
        return FockOperator(self.basis, (self.matrix + other.matrix).tocsr())

    def __sub__(self, other: "FockOperator") -> "FockOperator":
        self._check(other)
        return FockOperator(self.basis, (self.matrix - other.matrix).tocsr())

    def __mul__(self, scalar: complex) -> "FockOperator":
        return FockOperator(self.basis, (complex(scalar) * self.matrix).tocsr())

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, FockOperator):
            self._check(other)
            return FockOperator(self.basis, (self.matrix @ other.matrix).tocsr())
        return self.matrix @ np.asarray(other)

    def adjoint(self) -> "FockOperator":
        return FockOperator(self.basis, self.matrix.conj().T.tocsr())

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def expectation(self, ket: np.ndarray) -> complex:
        return complex(np.vdot(ket, self.matrix @ ket))


def identity(basis: FockBasis) -> FockOperator:
    return FockOperator(basis, sparse.identity(basis.dim, dtype=complex, format="csr"))


def make_ladder(basis: FockBasis, mode: str, kind: str) -> FockOperator:
    """Creation or annihilation operator for ``mode`` ('signal' or 'idler')."""
    if mode not in (SIGNAL, IDLER):
        raise InputError(f"mode must be 'signal' or 'idler', got {mode!r}")
    if kind not in ("create", "annihilate"):
        raise InputError(f"kind must be 'create' or 'annihilate', got {kind!r}")
    rows, cols, vals = [], [], []
    for col in range(basis.dim):
        n_s, n_i = basis.occupations(col)
        n = n_s if mode == SIGNAL else n_i
        if kind == "annihilate":
            if n == 0:
                continue
            new, amp = n - 1, math.sqrt(n)
        else:
            if n == basis.n_max:
                continue
            new, amp = n + 1, math.sqrt(n + 1)
        row = basis.index(new, n_i) if mode == SIGNAL else basis.index(n_s, new)
        rows.append(row)
        cols.append(col)
        vals.append(amp)
    coo = sparse.coo_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(basis.dim, basis.dim))
    return FockOperator(basis, coo.tocsr())


@dataclass(frozen=True)
class DetectorFieldHS:
    """Positive-frequency detector field and its adjoint."""

    e_plus: FockOperator
    e_minus: FockOperator

    @classmethod
    def from_plus(cls, e_plus: FockOperator) -> "DetectorFieldHS":
        return cls(e_plus, e_plus.adjoint())


def build_detector_fields(
    basis: FockBasis, theta: float, phi: float, d: complex
) -> tuple[DetectorFieldHS, DetectorFieldHS]:
    """Alice's and Bob's field operators behind polarisers at ``theta`` and ``phi``.

    Alice: ``a_s cos(theta) + i a_i sin(theta) + D [a_i^+ cos(theta) + i a_s^+ sin(theta)]``.
    Bob:   ``a_i cos(phi) - i a_s sin(phi) + D [a_s^+ cos(phi) - i a_i^+ sin(phi)]``.
    """
    d = complex(d)
    if not abs(d) < 1:
        raise InputError(f"|D| must be < 1, got {abs(d)}")
    a_s = make_ladder(basis, SIGNAL, "annihilate")
    a_i = make_ladder(basis, IDLER, "annihilate")
    c_s = make_ladder(basis, SIGNAL, "create")
    c_i = make_ladder(basis, IDLER, "create")
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(phi), math.sin(phi)
    alice = ct * a_s + (1j * st) * a_i + d * (ct * c_i + (1j * st) * c_s)
    bob = cp * a_i + (-1j * sp) * a_s + d * (cp * c_s + (-1j * sp) * c_i)
    return DetectorFieldHS.from_plus(alice), DetectorFieldHS.from_plus(bob)


def single_rate_hs(field: DetectorFieldHS) -> float:
    """``<0| E^- E^+ |0>`` on the truncated space."""
    vac = field.e_plus.basis.vacuum()
    return (field.e_minus @ field.e_plus).expectation(vac).real


def coincidence_rate_hs(alice: DetectorFieldHS, bob: DetectorFieldHS) -> float:
    """Mean of the two normally ordered four-field vacuum expectations."""
    if alice.e_plus.basis.n_max < 2:
        raise InputError("coincidence rate needs n_max >= 2")
    vac = alice.e_plus.basis.vacuum()
    ab = (alice.e_minus @ bob.e_minus @ bob.e_plus @ alice.e_plus).expectation(vac)
    ba = (bob.e_minus @ alice.e_minus @ alice.e_plus @ bob.e_plus).expectation(vac)
    return (0.5 * ab + 0.5 * ba).real


def rates_hs(theta: float, phi: float, d: complex, n_max: int = DEFAULT_NMAX) -> tuple[float, float, float]:
    """``(R_A, R_B, R_AB)`` from the Fock-space oracle."""
    alice, bob = build_detector_fields(FockBasis(n_max), theta, phi, d)
    return single_rate_hs(alice), single_rate_hs(bob), coincidence_rate_hs(alice, bob)


def single_rate_hs_local(side: str, angle: float, d: complex, n_max: int = DEFAULT_NMAX) -> float:
    """Single rate of one detector, built from that detector's angle alone."""
    basis = FockBasis(n_max)
    if side == "alice":
        field, _ = build_detector_fields(basis, angle, 0.0, d)
    elif side == "bob":
        _, field = build_detector_fields(basis, 0.0, angle, d)
    else:
        raise InputError(f"side must be 'alice' or 'bob', got {side!r}")
    return single_rate_hs(field)

