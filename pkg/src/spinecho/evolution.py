"""Unitary time propagation and the composed echo operator.

The default path is an adaptive Lanczos exponential: each substep builds a
Krylov basis of growing dimension until the a posteriori residual estimate
drops below ``step_tolerance``, shrinking the substep if ``max_krylov_dim``
is reached first.  When no DQ term is present the Zeeman part commutes with
everything else and is applied exactly as a diagonal phase.

``spectral`` diagonalizes the generator once, sector by sector (total nu
without DQ, nu parity with it), and is the cheap choice when the same
Hamiltonian is applied many times, as in echo traces.  ``dense_oracle``
diagonalizes the independent Kronecker-product matrix and exists for
cross-checks on small systems.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
import scipy.linalg

from spinecho import dense
from spinecho.basis import StateVector, nu_values, popcounts
from spinecho.hamiltonian import HamiltonianSpec, PairOperator, build_operator

log = logging.getLogger(__name__)

DENSE_LIMIT = 12
SPECTRAL_LIMIT = 14
MIN_STEP_FRACTION = 2.0**-30


class PropagationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PropagatorConfig:
    method: Literal["krylov", "spectral", "dense_oracle"] = "krylov"
    max_krylov_dim: int = 30
    step_tolerance: float = 1e-9
    dt_max: float = 1.0

    def __post_init__(self):
        if self.method not in ("krylov", "spectral", "dense_oracle"):
            raise ValueError(f"unknown propagation method {self.method!r}")
        if self.max_krylov_dim < 2:
            raise ValueError("max_krylov_dim must be at least 2")
        if not self.step_tolerance > 0:
            raise ValueError("step_tolerance must be positive")
        if not self.dt_max > 0:
            raise ValueError("dt_max must be positive")


@dataclass(frozen=True)
class TimeGrid:
    t_max: float
    n_samples: int

    def __post_init__(self):
        if self.n_samples < 2 or not self.t_max > 0:
            raise ValueError("time grid needs t_max > 0 and at least two samples")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_samples)


def _tridiag_expm_e1(alpha: np.ndarray, beta: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i T dt) e_1 for the real symmetric tridiagonal T."""
    if alpha.size == 1:
        return np.array([np.exp(-1j * alpha[0] * dt)])
    w, u = scipy.linalg.eigh_tridiagonal(alpha, beta)
    return u @ (np.exp(-1j * w * dt) * u[0])


class KrylovPropagator:
    """Adaptive Lanczos propagator bound to a single Hamiltonian."""

    def __init__(self, op: PairOperator, cfg: PropagatorConfig,
                 phase_diag: Optional[np.ndarray] = None):
        self.op = op
        self.cfg = cfg
        # commuting diagonal part applied exactly after the Krylov evolution
        self.phase_diag = phase_diag
        m = cfg.max_krylov_dim
        self._basis = np.empty((m + 1, op.dim), dtype=np.complex128)
        self._w = np.empty(op.dim, dtype=np.complex128)
        self._dt = cfg.dt_max
        self.n_matvec = 0
        self.n_steps = 0

    def _step(self, v: np.ndarray, t_left: float) -> tuple[np.ndarray, float]:
        cfg = self.cfg
        m = cfg.max_krylov_dim
        tol = cfg.step_tolerance
        V = self._basis
        w = self._w
        nrm = np.linalg.norm(v)
        V[0] = v / nrm
        alpha = np.zeros(m)
        beta = np.zeros(m)
        dt = min(self._dt, t_left)
        for j in range(m):
            self.op.matvec(V[j], w)
            self.n_matvec += 1
            alpha[j] = np.vdot(V[j], w).real
            # full reorthogonalization against the whole basis
            w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
            beta[j] = np.linalg.norm(w)
            k = j + 1
            if beta[j] < 1e-14 * max(1.0, abs(alpha[j])):
                # invariant subspace: exact for any dt
                y = _tridiag_expm_e1(alpha[:k], beta[: k - 1], dt)
                return nrm * (y @ V[:k]), dt
            y = _tridiag_expm_e1(alpha[:k], beta[: k - 1], dt)
            err = beta[j] * abs(y[-1])
            if err < tol:
                if k < 0.6 * m:
                    self._dt = min(cfg.dt_max, dt * 1.5)
                return nrm * (y @ V[:k]), dt
            if j + 1 < m:
                V[j + 1] = w / beta[j]
        # basis exhausted: shrink dt on the same basis until the estimate passes
        dt_floor = cfg.dt_max * MIN_STEP_FRACTION
        while dt > dt_floor:
            dt *= 0.5
            y = _tridiag_expm_e1(alpha, beta[: m - 1], dt)
            if beta[m - 1] * abs(y[-1]) < tol:
                self._dt = dt
                return nrm * (y @ V[:m]), dt
        raise PropagationError(
            f"Krylov step did not converge: dim={m}, tolerance={tol}, "
            f"step shrunk below {dt_floor:.3g}; raise max_krylov_dim or dt_max"
        )

    def evolve(self, amps: np.ndarray, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("propagation time must be non-negative")
        v = np.array(amps, dtype=np.complex128, copy=True)
        t_done = 0.0
        while t - t_done > 1e-14 * max(1.0, t):
            v, dt = self._step(v, t - t_done)
            t_done += dt
            self.n_steps += 1
        if self.phase_diag is not None:
            v *= np.exp(-1j * t * self.phase_diag)
        return v


def _sector_labels(spec: HamiltonianSpec) -> np.ndarray:
    pop = popcounts(spec.n_spins)
    return pop % 2 if spec.dq is not None else pop


def sector_matrix(op: PairOperator, states: np.ndarray) -> np.ndarray:
    """Dense real block of ``op`` on a closed set of basis states (sorted)."""
    pos = np.full(op.dim, -1, dtype=np.int64)
    pos[states] = np.arange(states.size)
    H = np.zeros((states.size, states.size))
    H[np.arange(states.size), np.arange(states.size)] = op.diag[states]
    rows = np.arange(states.size)
    for m, ca, cp in zip(op.masks, op.antiparallel, op.parallel):
        x = states & m
        c = np.where((x == 0) | (x == m), cp, ca)
        cols = pos[states ^ m]
        keep = (c != 0.0) & (cols >= 0)
        H[rows[keep], cols[keep]] += c[keep]
    return H


class SpectralPropagator:
    """exp(-iHt) from per-sector eigendecompositions of the kernel matrix."""

    def __init__(self, spec: HamiltonianSpec):
        if spec.n_spins > SPECTRAL_LIMIT:
            raise ValueError(f"spectral propagation limited to N <= {SPECTRAL_LIMIT}")
        op = build_operator(spec)
        labels = _sector_labels(spec)
        self.blocks = []
        for lab in np.unique(labels):
            states = np.flatnonzero(labels == lab)
            w, v = scipy.linalg.eigh(sector_matrix(op, states), overwrite_a=True)
            self.blocks.append((states, w, v))

    def evolve(self, amps: np.ndarray, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("propagation time must be non-negative")
        out = np.empty(amps.shape, dtype=np.complex128)
        for states, w, v in self.blocks:
            # real eigenvectors: keep the products in real BLAS
            x = amps[states]
            c = (v.T @ np.column_stack((x.real, x.imag))) @ [1.0, 1j]
            c *= np.exp(-1j * w * t)
            out[states] = (v @ np.column_stack((c.real, c.imag))) @ [1.0, 1j]
        return out


class DensePropagator:
    """exp(-iHt) from a cached eigendecomposition of the dense matrix."""

    def __init__(self, spec: HamiltonianSpec):
        if spec.n_spins > DENSE_LIMIT:
            raise ValueError(f"dense propagation limited to N <= {DENSE_LIMIT}")
        self.w, self.v = scipy.linalg.eigh(dense.hamiltonian_matrix(spec))

    def evolve(self, amps: np.ndarray, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("propagation time must be non-negative")
        return self.v @ (np.exp(-1j * self.w * t) * (self.v.T @ amps))


def make_propagator(spec: HamiltonianSpec, cfg: Optional[PropagatorConfig] = None):
    cfg = cfg or PropagatorConfig()
    if cfg.method == "dense_oracle":
        return DensePropagator(spec)
    if cfg.method == "spectral":
        return SpectralPropagator(spec)
    if spec.dq is None and spec.zeeman_omega1:
        secular = HamiltonianSpec(spec.dipolar, spec.sign, 0.0, None)
        zeeman = spec.sign * spec.zeeman_omega1 * nu_values(spec.n_spins)
        return KrylovPropagator(build_operator(secular), cfg, zeeman)
    return KrylovPropagator(build_operator(spec), cfg)


def _amps(psi, n_spins):
    amps = psi.amplitudes if isinstance(psi, StateVector) else np.asarray(psi, dtype=np.complex128)
    if amps.shape != (1 << n_spins,):
        raise ValueError("state dimension does not match the Hamiltonian")
    return amps


def propagate(spec: HamiltonianSpec, psi: StateVector, t: float,
              cfg: Optional[PropagatorConfig] = None) -> StateVector:
    """Return exp(-i H t) psi for the generator described by ``spec``."""
    amps = _amps(psi, spec.n_spins)
    out = make_propagator(spec, cfg).evolve(amps, t)
    return StateVector(spec.n_spins, out)


def forward_spec(spec0: HamiltonianSpec) -> HamiltonianSpec:
    """Unperturbed forward generator H_dip + H_Z (any DQ term is dropped)."""
    return HamiltonianSpec(spec0.dipolar, 1, spec0.zeeman_omega1, None)


def backward_spec(spec0: HamiltonianSpec) -> HamiltonianSpec:
    """Perturbed reversed generator -(H_dip + H_Z) + H_dq."""
    return HamiltonianSpec(spec0.dipolar, -1, spec0.zeeman_omega1, spec0.dq)


class EchoPropagator:
    """Holds the forward and backward propagators for repeated echo legs."""

    def __init__(self, spec0: HamiltonianSpec, cfg: Optional[PropagatorConfig] = None):
        self.spec0 = spec0
        self.forward = make_propagator(forward_spec(spec0), cfg)
        self.backward = make_propagator(backward_spec(spec0), cfg)

    def apply(self, amps: np.ndarray, t_reversal: float) -> np.ndarray:
        return self.backward.evolve(self.forward.evolve(amps, t_reversal), t_reversal)


def loschmidt_apply(spec0: HamiltonianSpec, t_reversal: float, psi: StateVector,
                    cfg: Optional[PropagatorConfig] = None) -> StateVector:
    """U_-(t_R) U_+(t_R) psi.

    ``spec0`` carries the dipolar couplings, omega1 and (optionally) the DQ
    couplings; the forward leg runs under H_dip + H_Z and the backward leg
    under -H_dip - H_Z + H_dq.  Without DQ couplings the result is psi.
    """
    amps = _amps(psi, spec0.n_spins)
    out = EchoPropagator(spec0, cfg).apply(amps, t_reversal)
    return StateVector(spec0.n_spins, out)
