"""Loschmidt-echo dynamics of disordered all-to-all spin-1/2 clusters."""

from spinecho.basis import StateVector, local_polarization, subspace_weights
from spinecho.evolution import PropagatorConfig, TimeGrid, loschmidt_apply, propagate
from spinecho.hamiltonian import (
    CouplingMatrix,
    EffectiveSpec,
    HamiltonianSpec,
    apply_dipolar,
    apply_dq,
    apply_veff,
    apply_zeeman,
    generate_couplings,
    sigma_eff,
)
from spinecho.loschmidt import LETrace, NeqStateSpec, build_neq_state, echo_trace, forward_trace

__version__ = "0.1.0"

__all__ = [
    "CouplingMatrix",
    "EffectiveSpec",
    "HamiltonianSpec",
    "LETrace",
    "NeqStateSpec",
    "PropagatorConfig",
    "StateVector",
    "TimeGrid",
    "apply_dipolar",
    "apply_dq",
    "apply_veff",
    "apply_zeeman",
    "build_neq_state",
    "echo_trace",
    "forward_trace",
    "generate_couplings",
    "local_polarization",
    "loschmidt_apply",
    "propagate",
    "sigma_eff",
    "subspace_weights",
]
