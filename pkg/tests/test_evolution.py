import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spinecho import dense
from spinecho.basis import StateVector, local_polarization
from spinecho.evolution import (
    EchoPropagator,
    KrylovPropagator,
    PropagationError,
    PropagatorConfig,
    SpectralPropagator,
    TimeGrid,
    backward_spec,
    forward_spec,
    loschmidt_apply,
    make_propagator,
    propagate,
)
from spinecho.hamiltonian import CouplingMatrix, HamiltonianSpec, build_operator, generate_couplings

from conftest import random_spec, random_state


def test_config_and_grid_validation():
    with pytest.raises(ValueError):
        PropagatorConfig(method="trotter")
    with pytest.raises(ValueError):
        PropagatorConfig(max_krylov_dim=1)
    with pytest.raises(ValueError):
        PropagatorConfig(step_tolerance=0)
    g = TimeGrid(2.0, 5)
    assert np.array_equal(g.times, [0, 0.5, 1, 1.5, 2])
    with pytest.raises(ValueError):
        TimeGrid(1.0, 1)


def test_zero_time_is_identity(rng):
    psi = random_state(5, rng)
    out = propagate(random_spec(5, rng), psi, 0.0)
    assert np.array_equal(out.amplitudes, psi.amplitudes)


def test_negative_time_rejected(rng):
    with pytest.raises(ValueError):
        propagate(random_spec(3, rng), random_state(3, rng), -1.0)


def test_two_spin_flip_flop_analytic():
    j = 0.9
    spec = HamiltonianSpec(CouplingMatrix.uniform(2, j))
    psi = StateVector.from_spins("ud")
    for t in np.linspace(0, 12, 13):
        got = local_polarization(propagate(spec, psi, t), 1)
        # flip-flop element -j/2 inside the {ud, du} block
        assert got == pytest.approx(math.cos(j * t / 2) ** 2 - math.sin(j * t / 2) ** 2, abs=1e-10)


@pytest.mark.parametrize("method", ["krylov", "spectral"])
def test_matches_dense_oracle(method, rng):
    cfg = PropagatorConfig(method=method)
    for _ in range(4):
        spec = random_spec(6, rng)
        psi = random_state(6, rng)
        t = float(rng.uniform(0, 25))
        want = dense.expm_apply(dense.hamiltonian_matrix(spec), psi.amplitudes, t)
        got = propagate(spec, psi, t, cfg).amplitudes
        assert np.linalg.norm(got - want) < 1e-8


def test_methods_agree_at_n10(rng):
    spec = random_spec(10, rng, with_dq=True)
    psi = random_state(10, rng)
    a = propagate(spec, psi, 7.0).amplitudes
    b = propagate(spec, psi, 7.0, PropagatorConfig(method="spectral")).amplitudes
    assert np.linalg.norm(a - b) < 1e-8


def test_unitarity_long_time(rng):
    spec = random_spec(8, rng, with_dq=True)
    out = propagate(spec, random_state(8, rng), 1000.0)
    assert abs(out.norm() - 1) < 1e-9


@given(st.integers(0, 2**32 - 1), st.floats(0, 10), st.floats(0, 10))
def test_composition(seed, t1, t2):
    rng = np.random.default_rng(seed)
    spec = random_spec(5, rng)
    psi = random_state(5, rng)
    whole = propagate(spec, psi, t1 + t2).amplitudes
    split = propagate(spec, propagate(spec, psi, t1), t2).amplitudes
    assert np.linalg.norm(whole - split) < 1e-8


@given(st.integers(0, 2**32 - 1))
def test_energy_conserved(seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(6, rng, with_dq=True)
    H = dense.hamiltonian_matrix(spec)
    psi = random_state(6, rng).amplitudes
    e0 = np.vdot(psi, H @ psi).real
    for t in (1.0, 5.0, 20.0):
        v = propagate(spec, StateVector(6, psi), t).amplitudes
        assert np.vdot(v, H @ v).real == pytest.approx(e0, rel=1e-8, abs=1e-8)


def test_zeeman_does_not_change_forward_polarization(rng):
    J = generate_couplings(8, 1.0, 3)
    psi = random_state(8, rng)
    for t in (0.5, 3.0, 11.0):
        a = propagate(HamiltonianSpec(J, 1, 0.0), psi, t)
        b = propagate(HamiltonianSpec(J, 1, 4.5), psi, t)
        for site in (1, 4):
            assert local_polarization(a, site) == pytest.approx(local_polarization(b, site), abs=1e-8)


def test_krylov_reports_non_convergence():
    spec = HamiltonianSpec(generate_couplings(6, 1.0, 1), 1, 0.0,
                           generate_couplings(6, 5.0, 1, "double_quantum"))
    # a two-vector basis cannot meet this tolerance above the step floor
    cfg = PropagatorConfig(max_krylov_dim=2, step_tolerance=1e-300)
    prop = KrylovPropagator(build_operator(spec), cfg)
    with pytest.raises(PropagationError, match="max_krylov_dim"):
        prop.evolve(random_state(6, np.random.default_rng(0)).amplitudes, 1.0)


def test_forward_and_backward_specs():
    J = generate_couplings(4, 1.0, 2)
    Q = generate_couplings(4, 1.0, 2, "double_quantum")
    spec0 = HamiltonianSpec(J, 1, 2.0, Q)
    f, b = forward_spec(spec0), backward_spec(spec0)
    assert f.sign == 1 and f.dq is None and f.zeeman_omega1 == 2.0
    assert b.sign == -1 and b.dq is Q and b.zeeman_omega1 == 2.0


@pytest.mark.parametrize("method", ["krylov", "spectral"])
def test_perfect_reversal_without_dq(method, rng):
    spec0 = HamiltonianSpec(generate_couplings(7, 1.0, 5), 1, 3.0)
    psi = random_state(7, rng)
    for t_r in (0.0, 2.5, 30.0):
        out = loschmidt_apply(spec0, t_r, psi, PropagatorConfig(method=method))
        assert abs(psi.overlap(out)) > 1 - 1e-8


def test_loschmidt_matches_dense_product(rng):
    for _ in range(3):
        spec0 = random_spec(6, rng, sign=1, with_dq=True)
        psi = random_state(6, rng)
        t_r = float(rng.uniform(0.5, 10))
        H_plus = dense.hamiltonian_matrix(forward_spec(spec0))
        H_minus = -H_plus + dense.dq_matrix(spec0.dq)
        want = dense.expm_apply(H_minus, dense.expm_apply(H_plus, psi.amplitudes, t_r), t_r)
        got = loschmidt_apply(spec0, t_r, psi).amplitudes
        assert np.linalg.norm(got - want) < 1e-8


def test_echo_propagator_reuse(rng):
    spec0 = random_spec(6, rng, sign=1, with_dq=True)
    echo = EchoPropagator(spec0, PropagatorConfig(method="spectral"))
    psi = random_state(6, rng)
    a = echo.apply(psi.amplitudes, 4.0)
    b = loschmidt_apply(spec0, 4.0, psi).amplitudes
    assert np.linalg.norm(a - b) < 1e-8


def test_spectral_size_limit():
    with pytest.raises(ValueError):
        SpectralPropagator(HamiltonianSpec(generate_couplings(15, 1.0, 0)))


def test_make_propagator_dense_oracle(rng):
    spec = random_spec(5, rng)
    prop = make_propagator(spec, PropagatorConfig(method="dense_oracle"))
    psi = random_state(5, rng).amplitudes
    want = dense.expm_apply(dense.hamiltonian_matrix(spec), psi, 2.0)
    assert np.linalg.norm(prop.evolve(psi, 2.0) - want) < 1e-12
