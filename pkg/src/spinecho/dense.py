"""Dense reference operators built from Kronecker products of 2x2 matrices.

Independent of the bit kernels in :mod:`spinecho.hamiltonian`; intended as a
test oracle for N <= 8 or so.
"""

from __future__ import annotations

from functools import reduce

import numpy as np
import scipy.linalg

from spinecho.hamiltonian import CouplingMatrix, EffectiveSpec, HamiltonianSpec

SZ = np.array([[-0.5, 0.0], [0.0, 0.5]])
# basis order (down, up) so that a set bit means up
SP = np.array([[0.0, 0.0], [1.0, 0.0]])
SM = SP.T.copy()
I2 = np.eye(2)


def site_operator(op: np.ndarray, site: int, n_spins: int) -> np.ndarray:
    """Embed a single-spin operator at 1-based ``site``; site 1 is the lowest bit."""
    # np.kron puts its first factor on the most significant bit
    factors = [op if (n_spins - k) == site else I2 for k in range(n_spins)]
    return reduce(np.kron, factors)


def _ops(n):
    return (
        [site_operator(SZ, i, n) for i in range(1, n + 1)],
        [site_operator(SP, i, n) for i in range(1, n + 1)],
        [site_operator(SM, i, n) for i in range(1, n + 1)],
    )


def dipolar_matrix(J: CouplingMatrix) -> np.ndarray:
    n = J.n_spins
    sz, sp, sm = _ops(n)
    H = np.zeros((1 << n, 1 << n))
    for i in range(n):
        for j in range(i + 1, n):
            H += J.values[i, j] * (2 * sz[i] @ sz[j] - 0.5 * (sp[i] @ sm[j] + sm[i] @ sp[j]))
    return H


def zeeman_matrix(omega1: float, n_spins: int) -> np.ndarray:
    sz, _, _ = _ops(n_spins)
    return omega1 * sum(sz)


def dq_matrix(Jdq: CouplingMatrix) -> np.ndarray:
    n = Jdq.n_spins
    _, sp, sm = _ops(n)
    H = np.zeros((1 << n, 1 << n))
    for i in range(n):
        for j in range(i + 1, n):
            H += Jdq.values[i, j] * (sp[i] @ sp[j] + sm[i] @ sm[j])
    return H


def veff_matrix(spec: EffectiveSpec) -> np.ndarray:
    """Explicit quadruple sum over ordered (l, k) and (i, j) with l != k, i != j."""
    J = spec.dq.values
    n = spec.dq.n_spins
    _, sp, sm = _ops(n)
    dim = 1 << n
    V = np.zeros((dim, dim))
    for l in range(n):
        for k in range(n):
            if l == k:
                continue
            raise_lk = sp[l] @ sp[k]
            lower_lk = sm[l] @ sm[k]
            for i in range(n):
                for j in range(n):
                    if i == j:
                        continue
                    c = J[l, k] * J[i, j] / (8.0 * spec.omega1)
                    V += c * (raise_lk @ sm[i] @ sm[j] + lower_lk @ sp[i] @ sp[j])
    return V


def hamiltonian_matrix(spec: HamiltonianSpec) -> np.ndarray:
    H = spec.sign * (dipolar_matrix(spec.dipolar) + zeeman_matrix(spec.zeeman_omega1, spec.n_spins))
    if spec.dq is not None:
        H = H + dq_matrix(spec.dq)
    return H


def expm_apply(H: np.ndarray, psi: np.ndarray, t: float) -> np.ndarray:
    """exp(-i H t) psi via eigendecomposition of the Hermitian matrix H."""
    w, v = scipy.linalg.eigh(H)
    return v @ (np.exp(-1j * w * t) * (v.conj().T @ psi))
