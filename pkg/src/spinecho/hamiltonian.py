"""Disordered all-to-all couplings and matrix-free Hamiltonian actions.

Spin operators follow S^z = +-1/2 and S^+- = S^x +- i S^y.  Pair sums run
over unordered pairs i < j.  Every off-diagonal term in this model flips
exactly two bits, so all actions reduce to a gather over ``b ^ mask`` for
each pair mask; whether the pair is parallel or antiparallel in ``b``
decides which coupling applies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numba
import numpy as np

from spinecho.basis import StateVector, nu_values

Kind = Literal["dipolar", "double_quantum"]
KIND_STREAMS = {"dipolar": 0, "double_quantum": 1}
DISORDER_WIDTH = 0.1


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    n_spins: int
    values: np.ndarray
    kind: Kind
    seed: Optional[int] = None
    j0: float = 1.0

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.shape != (self.n_spins, self.n_spins):
            raise ValueError(f"coupling matrix must be {self.n_spins}x{self.n_spins}")
        if not np.allclose(vals, vals.T, rtol=0, atol=0) or np.any(np.diag(vals) != 0):
            raise ValueError("coupling matrix must be symmetric with zero diagonal")
        if self.kind not in KIND_STREAMS:
            raise ValueError(f"unknown coupling kind {self.kind!r}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def uniform(cls, n_spins: int, j: float, kind: Kind = "dipolar") -> "CouplingMatrix":
        vals = np.full((n_spins, n_spins), float(j))
        np.fill_diagonal(vals, 0.0)
        return cls(n_spins, vals, kind, None, float(j) * math.sqrt(n_spins))

    def scaled(self, factor: float) -> "CouplingMatrix":
        return CouplingMatrix(self.n_spins, self.values * factor, self.kind, self.seed, self.j0 * factor)

    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Bit masks and couplings for every unordered pair i < j."""
        i, j = np.triu_indices(self.n_spins, k=1)
        masks = (np.int64(1) << i.astype(np.int64)) | (np.int64(1) << j.astype(np.int64))
        return masks, self.values[i, j].copy()


def generate_couplings(
    n_spins: int,
    j0: float = 1.0,
    seed: int = 0,
    kind: Kind = "dipolar",
    shared_disorder: bool = False,
) -> CouplingMatrix:
    """Draw J_ij = (1 + chi) (-1)**k j0 / sqrt(N) for every unordered pair.

    chi is uniform in [-0.1, 0.1] and k is 0 or 1 with equal probability.
    Each kind draws from its own stream of ``seed`` unless ``shared_disorder``
    is set, in which case both kinds reuse the same (chi, k) draws.
    """
    if n_spins < 2:
        raise ValueError("need at least two spins to define couplings")
    if kind not in KIND_STREAMS:
        raise ValueError(f"unknown coupling kind {kind!r}")
    stream = 0 if shared_disorder else KIND_STREAMS[kind]
    rng = np.random.default_rng([int(seed), stream])
    i, j = np.triu_indices(n_spins, k=1)
    chi = rng.uniform(-DISORDER_WIDTH, DISORDER_WIDTH, size=i.size)
    k = rng.integers(0, 2, size=i.size)
    vals = np.zeros((n_spins, n_spins))
    vals[i, j] = (1.0 + chi) * np.where(k == 1, -1.0, 1.0) * j0 / math.sqrt(n_spins)
    vals[j, i] = vals[i, j]
    return CouplingMatrix(n_spins, vals, kind, int(seed), float(j0))


@dataclass(frozen=True)
class HamiltonianSpec:
    """Generator ``sign * (H_dip + H_Z) + H_dq``.

    ``sign`` reverses the secular part only; the double-quantum term, when
    present, always enters with a plus sign.
    """

    dipolar: CouplingMatrix
    sign: int = 1
    zeeman_omega1: float = 0.0
    dq: Optional[CouplingMatrix] = None

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.zeeman_omega1 < 0:
            raise ValueError("zeeman_omega1 must be non-negative")
        if self.dq is not None and self.dq.n_spins != self.dipolar.n_spins:
            raise ValueError("dipolar and double-quantum couplings disagree on N")

    @property
    def n_spins(self) -> int:
        return self.dipolar.n_spins

    def reversed_perturbed(self, dq: Optional[CouplingMatrix]) -> "HamiltonianSpec":
        return HamiltonianSpec(self.dipolar, -self.sign, self.zeeman_omega1, dq)


@dataclass(frozen=True)
class EffectiveSpec:
    dq: CouplingMatrix
    omega1: float

    def __post_init__(self):
        if not self.omega1 > 0:
            raise ValueError("effective interaction needs omega1 > 0")


# --- bit kernels -----------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _pair_gather(psi, out, diag, masks, antiparallel_coef, parallel_coef):
    # out[b] = diag[b] psi[b] + sum_p c_p(b) psi[b ^ mask_p]; pair-outer order
    # keeps the inner loop branch-light and cache-resident
    dim = psi.shape[0]
    for b in range(dim):
        out[b] = diag[b] * psi[b]
    for p in range(masks.shape[0]):
        m = masks[p]
        ca = antiparallel_coef[p]
        cp = parallel_coef[p]
        if ca == 0.0 and cp == 0.0:
            continue
        for b in range(dim):
            x = b & m
            c = cp if (x == 0 or x == m) else ca
            out[b] += c * psi[b ^ m]


@numba.njit(cache=True, nogil=True)
def _pair_raise_gather(psi, out, masks, coef, raising):
    # raising: out = sum_p J_p S+S+ psi; otherwise the lowering counterpart
    dim = psi.shape[0]
    npairs = masks.shape[0]
    for b in range(dim):
        acc = 0j
        for p in range(npairs):
            m = masks[p]
            x = b & m
            if (raising and x == m) or (not raising and x == 0):
                acc += coef[p] * psi[b ^ m]
        out[b] = acc


def ising_diagonal(J: CouplingMatrix) -> np.ndarray:
    """Diagonal of sum_{i<j} 2 J_ij S^z_i S^z_j for every basis index."""
    n = J.n_spins
    diag = np.zeros(1 << n)
    idx = np.arange(1 << n, dtype=np.int64)
    s = [((idx >> k) & 1) - 0.5 for k in range(n)]
    for a in range(n):
        for c in range(a + 1, n):
            if J.values[a, c] != 0.0:
                diag += 2.0 * J.values[a, c] * s[a] * s[c]
    return diag


def _as_amps(psi, n_spins: int) -> np.ndarray:
    amps = psi.amplitudes if isinstance(psi, StateVector) else np.asarray(psi)
    if amps.shape != (1 << n_spins,):
        raise ValueError(f"state dimension {amps.shape} does not match {n_spins} spins")
    return np.ascontiguousarray(amps, dtype=np.complex128)


def _out_buffer(out, dim):
    if out is None:
        return np.empty(dim, dtype=np.complex128)
    if out.shape != (dim,) or out.dtype != np.complex128:
        raise ValueError("output buffer must be a complex128 vector of matching length")
    return out


def _wrap(like, amps: np.ndarray, n_spins: int):
    return StateVector(n_spins, amps) if isinstance(like, StateVector) else amps


class PairOperator:
    """Fused ``diag + two-bit-flip`` operator; the workhorse matvec."""

    def __init__(self, n_spins: int, diag: np.ndarray, masks: np.ndarray,
                 antiparallel: np.ndarray, parallel: np.ndarray):
        self.n_spins = n_spins
        self.dim = 1 << n_spins
        self.diag = np.ascontiguousarray(diag, dtype=np.float64)
        self.masks = np.ascontiguousarray(masks, dtype=np.int64)
        self.antiparallel = np.ascontiguousarray(antiparallel, dtype=np.float64)
        self.parallel = np.ascontiguousarray(parallel, dtype=np.float64)

    def matvec(self, amps: np.ndarray, out: Optional[np.ndarray] = None) -> np.ndarray:
        out = _out_buffer(out, self.dim)
        _pair_gather(amps, out, self.diag, self.masks, self.antiparallel, self.parallel)
        return out

    __call__ = matvec

    def spectral_bound(self) -> float:
        """Gershgorin bound on the spectral radius."""
        off = np.abs(self.antiparallel).sum() + np.abs(self.parallel).sum()
        return float(np.max(np.abs(self.diag)) + off)


def build_operator(spec: HamiltonianSpec) -> PairOperator:
    """Compile a HamiltonianSpec into a single fused matrix-free operator."""
    J = spec.dipolar
    n = J.n_spins
    masks, jdip = J.pairs()
    diag = ising_diagonal(J)
    if spec.zeeman_omega1:
        diag = diag + spec.zeeman_omega1 * nu_values(n)
    diag *= spec.sign
    antiparallel = -0.5 * spec.sign * jdip
    if spec.dq is not None:
        _, parallel = spec.dq.pairs()
    else:
        parallel = np.zeros_like(jdip)
    return PairOperator(n, diag, masks, antiparallel, parallel)


def apply_dipolar(J: CouplingMatrix, psi, sign: int = 1, out=None):
    """sign * H_dip psi with H_dip = sum_{i<j} J_ij [2 SzSz - (S+S- + S-S+)/2]."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    amps = _as_amps(psi, J.n_spins)
    op = build_operator(HamiltonianSpec(J, sign))
    return _wrap(psi, op.matvec(amps, out), J.n_spins)


def apply_zeeman(omega1: float, psi, n_spins: Optional[int] = None, out=None):
    """omega1 * sum_i S^z_i psi (diagonal)."""
    if omega1 < 0:
        raise ValueError("omega1 must be non-negative")
    n = psi.n_spins if isinstance(psi, StateVector) else n_spins
    amps = _as_amps(psi, n)
    out = _out_buffer(out, amps.shape[0])
    np.multiply(omega1 * nu_values(n), amps, out=out)
    return _wrap(psi, out, n)


def apply_dq(Jdq: CouplingMatrix, psi, out=None):
    """H_dq psi with H_dq = sum_{i<j} J_ij (S+_i S+_j + S-_i S-_j)."""
    n = Jdq.n_spins
    amps = _as_amps(psi, n)
    masks, jdq = Jdq.pairs()
    out = _out_buffer(out, amps.shape[0])
    _pair_gather(amps, out, np.zeros(1 << n), masks, np.zeros_like(jdq), jdq)
    return _wrap(psi, out, n)


def raising_pairs(Jdq: CouplingMatrix, psi, raising: bool = True, out=None):
    """sum_{i<j} J_ij S+_i S+_j psi, or the lowering partner when ``raising`` is False."""
    n = Jdq.n_spins
    amps = _as_amps(psi, n)
    masks, jdq = Jdq.pairs()
    out = _out_buffer(out, amps.shape[0])
    _pair_raise_gather(amps, out, masks, jdq, raising)
    return _wrap(psi, out, n)


def apply_veff(spec: EffectiveSpec, psi, out=None):
    """Second-order effective interaction generated by the DQ term.

    Summing the four-spin products over all ordered index pairs gives
    B B^dag + B^dag B with B = 2 R, R = sum_{i<j} J_ij S+_i S+_j.  Overlapping
    indices are kept, which yields the two-body effective flip-flops.
    """
    if not spec.omega1 > 0:
        raise ValueError("effective interaction needs omega1 > 0")
    n = spec.dq.n_spins
    amps = _as_amps(psi, n)
    masks, jdq = spec.dq.pairs()
    up = np.empty_like(amps)
    down = np.empty_like(amps)
    tmp = np.empty_like(amps)
    _pair_raise_gather(amps, down, masks, jdq, False)
    _pair_raise_gather(down, tmp, masks, jdq, True)   # R R^dag psi
    _pair_raise_gather(amps, up, masks, jdq, True)
    _pair_raise_gather(up, down, masks, jdq, False)   # R^dag R psi
    out = _out_buffer(out, amps.shape[0])
    np.add(tmp, down, out=out)
    out *= 4.0 / (8.0 * spec.omega1)
    return _wrap(psi, out, n)


# --- second moments ---------------------------------------------------------


def local_second_moment(J: CouplingMatrix, site: int) -> float:
    """sigma_i^2 = sum_{j != i} (J_ij / 2)**2 for a 1-based site."""
    if not 1 <= site <= J.n_spins:
        raise IndexError(f"site {site} out of range 1..{J.n_spins}")
    row = J.values[site - 1]
    return float(np.sum((row / 2.0) ** 2))


def global_second_moment(J: CouplingMatrix) -> float:
    return sum(local_second_moment(J, i) for i in range(1, J.n_spins + 1)) / 4.0


@dataclass(frozen=True)
class VeffMoment:
    value: float
    a: float
    exact: bool
    n_states: int


ENUMERATION_LIMIT = 10


def veff_second_moment(
    spec: EffectiveSpec,
    n_spins: Optional[int] = None,
    n_samples: int = 512,
    seed: int = 0,
) -> VeffMoment:
    """Mean over basis states alpha of sum_beta |<beta|V_eff|alpha>|^2.

    Exact enumeration up to ``ENUMERATION_LIMIT`` spins, otherwise averaged
    over ``n_samples`` randomly chosen basis states.  Also returns the
    coefficient ``a`` implied by <V^2> = |a Jdq^2 / (2 omega1)|^2, where Jdq
    is the coupling scale of ``spec.dq``.
    """
    n = spec.dq.n_spins if n_spins is None else n_spins
    if n != spec.dq.n_spins:
        raise ValueError("n_spins does not match the coupling matrix")
    dim = 1 << n
    exact = n <= ENUMERATION_LIMIT or n_samples >= dim
    if exact:
        alphas = np.arange(dim)
    else:
        alphas = np.random.default_rng(seed).choice(dim, size=n_samples, replace=False)
    e = np.zeros(dim, dtype=np.complex128)
    col = np.empty(dim, dtype=np.complex128)
    total = 0.0
    for alpha in alphas:
        e[alpha] = 1.0
        apply_veff(spec, e, out=col)
        total += float(np.vdot(col, col).real)
        e[alpha] = 0.0
    value = total / len(alphas)
    jdq = spec.dq.j0
    a = math.sqrt(value) * 2.0 * spec.omega1 / jdq**2 if jdq else float("nan")
    return VeffMoment(value, a, exact, len(alphas))


def sigma_eff(jdq: float, omega1: float) -> float:
    """Effective perturbation strength (J^dq)^2 / omega1.

    Infinite at omega1 = 0 unless there is no DQ coupling at all.
    """
    if jdq == 0:
        return 0.0
    return jdq**2 / omega1 if omega1 > 0 else math.inf


def gamma_eff_estimate(jdq: float, omega1: float, a: float, b: float, j0: float = 1.0) -> float:
    """Effective golden-rule rate 2 pi |a Jdq^2 / (2 omega1)|^2 / (b j0)."""
    if omega1 <= 0 or b <= 0 or j0 <= 0:
        raise ValueError("omega1, b and j0 must be positive")
    return 2.0 * math.pi * (a * jdq**2 / (2.0 * omega1)) ** 2 / (b * j0)
