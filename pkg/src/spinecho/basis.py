"""Basis conventions and local spin observables on the full 2**N space.

Site ``i`` (1-based) is stored in bit ``i - 1`` of a basis index; a set bit
means spin up.  Units are hbar = J0 = 1 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

MAX_SPINS = 24
NORM_TOL = 1e-6


class NormalizationError(ValueError):
    pass


def popcounts(n_spins: int) -> np.ndarray:
    """Number of up spins for every basis index of an ``n_spins`` system."""
    return np.bitwise_count(np.arange(1 << n_spins, dtype=np.uint64)).astype(np.int64)


def magnetization(b: int, n_spins: int) -> Fraction:
    """Total z-projection of basis state ``b`` as an exact half-integer."""
    if not 0 <= b < (1 << n_spins):
        raise IndexError(f"basis index {b} out of range for {n_spins} spins")
    return Fraction(bin(b).count("1")) - Fraction(n_spins, 2)


def nu_values(n_spins: int) -> np.ndarray:
    """Total z-projection for every basis index, as floats."""
    return popcounts(n_spins) - n_spins / 2.0


@dataclass(frozen=True)
class StateVector:
    n_spins: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (1 << self.n_spins,):
            raise ValueError(
                f"expected {1 << self.n_spins} amplitudes for {self.n_spins} spins, got {amps.shape}"
            )
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis_state(cls, n_spins: int, b: int) -> "StateVector":
        amps = np.zeros(1 << n_spins, dtype=np.complex128)
        amps[b] = 1.0
        return cls(n_spins, amps)

    @classmethod
    def from_spins(cls, ups: str) -> "StateVector":
        """Product state from a string like ``"ud"``; character k is site k+1."""
        b = sum(1 << k for k, c in enumerate(ups) if c in "u1+")
        return cls.basis_state(len(ups), b)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        return StateVector(self.n_spins, self.amplitudes / self.norm())

    def overlap(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


def check_normalized(psi: StateVector, tol: float = NORM_TOL) -> None:
    norm = psi.norm()
    if abs(norm - 1.0) > tol:
        raise NormalizationError(f"state norm {norm!r} deviates from 1 by more than {tol}")


def local_polarization(psi: StateVector, site: int) -> float:
    """Return ``2 <psi|S^z_site|psi>`` for a 1-based ``site``."""
    if not 1 <= site <= psi.n_spins:
        raise IndexError(f"site {site} out of range 1..{psi.n_spins}")
    check_normalized(psi)
    return _polarization(psi.amplitudes, site - 1)


def _polarization(amps: np.ndarray, bit: int) -> float:
    # reshape so axis 1 is the selected bit; avoids building index masks
    prob = (amps.real**2 + amps.imag**2).reshape(-1, 2, 1 << bit)
    up = prob[:, 1, :].sum()
    down = prob[:, 0, :].sum()
    return float(up - down)


def subspace_weights(psi: StateVector) -> dict[Fraction, float]:
    """Probability carried by each total-projection sector ``nu``.

    Only sectors with nonzero weight appear in the result.
    """
    check_normalized(psi)
    n = psi.n_spins
    prob = np.abs(psi.amplitudes) ** 2
    sums = np.bincount(popcounts(n), weights=prob, minlength=n + 1)
    return {Fraction(k) - Fraction(n, 2): float(w) for k, w in enumerate(sums) if w > 0.0}
