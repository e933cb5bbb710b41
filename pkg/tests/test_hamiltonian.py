import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spinecho import dense
from spinecho.basis import StateVector, popcounts, subspace_weights
from spinecho.hamiltonian import (
    CouplingMatrix,
    EffectiveSpec,
    HamiltonianSpec,
    apply_dipolar,
    apply_dq,
    apply_veff,
    apply_zeeman,
    build_operator,
    gamma_eff_estimate,
    generate_couplings,
    global_second_moment,
    local_second_moment,
    sigma_eff,
    veff_second_moment,
)
from spinecho.io import coupling_text, read_couplings

from conftest import random_state


def two_spin(j):
    return CouplingMatrix.uniform(2, j)


# --- couplings -----------------------------------------------------------------


def test_couplings_magnitude_and_symmetry():
    J = generate_couplings(4, 1.0, seed=5)
    off = J.values[~np.eye(4, dtype=bool)]
    assert np.all((np.abs(off) >= 0.45) & (np.abs(off) <= 0.55))
    assert np.array_equal(J.values, J.values.T)
    assert np.all(np.diag(J.values) == 0)


def test_couplings_deterministic_and_seed_sensitive():
    a = generate_couplings(6, 1.0, seed=3)
    b = generate_couplings(6, 1.0, seed=3)
    c = generate_couplings(6, 1.0, seed=4)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_kinds_draw_independent_disorder_unless_shared():
    d = generate_couplings(6, 1.0, 9, "dipolar")
    q = generate_couplings(6, 1.0, 9, "double_quantum")
    s = generate_couplings(6, 1.0, 9, "double_quantum", shared_disorder=True)
    assert not np.array_equal(d.values, q.values)
    assert np.array_equal(d.values, s.values)


def test_couplings_reject_small_n_and_bad_matrices():
    with pytest.raises(ValueError):
        generate_couplings(1)
    with pytest.raises(ValueError):
        CouplingMatrix(2, np.array([[0, 1], [2, 0]]), "dipolar")
    with pytest.raises(ValueError):
        CouplingMatrix(2, np.eye(2), "dipolar")


def test_coupling_file_round_trip(tmp_path):
    J = generate_couplings(5, 1.3, seed=17, kind="double_quantum")
    p = tmp_path / "j.txt"
    p.write_text(coupling_text(J))
    back = read_couplings(p)
    assert np.array_equal(back.values, J.values)
    assert (back.kind, back.seed, back.j0) == ("double_quantum", 17, 1.3)


# --- single applications on two spins ------------------------------------------


def test_dipolar_two_spin_antiparallel():
    j = 0.7
    out = apply_dipolar(two_spin(j), StateVector.from_spins("ud"))
    expect = np.zeros(4, complex)
    expect[0b01] = -0.5 * j
    expect[0b10] = -0.5 * j
    assert np.allclose(out.amplitudes, expect, atol=1e-15)


def test_dipolar_two_spin_parallel_is_ising_eigenstate():
    j = 0.7
    out = apply_dipolar(two_spin(j), StateVector.from_spins("uu"), sign=-1)
    assert np.allclose(out.amplitudes, -0.5 * j * StateVector.from_spins("uu").amplitudes)


def test_zeeman_examples():
    up = StateVector.from_spins("uuuu")
    assert np.allclose(apply_zeeman(2.0, up).amplitudes, 4.0 * up.amplitudes)
    psi = random_state(4, np.random.default_rng(1))
    assert np.all(apply_zeeman(0.0, psi).amplitudes == 0)
    assert np.all(apply_zeeman(3.0, StateVector.from_spins("uudd")).amplitudes == 0)


def test_dq_two_spin_raises_pair():
    j = 0.4
    out = apply_dq(CouplingMatrix.uniform(2, j, "double_quantum"), StateVector.from_spins("dd"))
    assert np.allclose(out.amplitudes, j * StateVector.from_spins("uu").amplitudes)


def test_veff_three_spin_effective_flip_flop():
    n, j, w = 3, 0.3, 2.0
    spec = EffectiveSpec(CouplingMatrix.uniform(n, j, "double_quantum"), w)
    out = apply_veff(spec, StateVector.from_spins("udd"))
    oracle = dense.veff_matrix(spec) @ StateVector.from_spins("udd").amplitudes
    assert np.allclose(out.amplitudes, oracle, atol=1e-14)
    amp = out.amplitudes[0b100]
    assert amp != 0
    assert amp.real / (j * j / (8 * w)) == pytest.approx(round(amp.real / (j * j / (8 * w))))


def test_veff_scales_inversely_with_omega1():
    J = generate_couplings(5, 1.0, 2, "double_quantum")
    psi = random_state(5, np.random.default_rng(3))
    a = apply_veff(EffectiveSpec(J, 1.5), psi).amplitudes
    b = apply_veff(EffectiveSpec(J, 3.0), psi).amplitudes
    assert np.allclose(b, a / 2, atol=1e-15)
    with pytest.raises(ValueError):
        EffectiveSpec(J, 0.0)


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        apply_dipolar(generate_couplings(3), StateVector.from_spins("ud"))


# --- dense oracle and symmetry ------------------------------------------------


@pytest.mark.parametrize("n", [2, 3, 5, 7])
def test_every_apply_matches_dense(n, rng):
    J = generate_couplings(n, 1.0, 11)
    Q = generate_couplings(n, 0.8, 11, "double_quantum")
    psi = random_state(n, rng)
    v = psi.amplitudes
    pairs = [
        (apply_dipolar(J, psi, -1), -dense.dipolar_matrix(J) @ v),
        (apply_zeeman(1.7, psi), dense.zeeman_matrix(1.7, n) @ v),
        (apply_dq(Q, psi), dense.dq_matrix(Q) @ v),
        (apply_veff(EffectiveSpec(Q, 2.3), psi), dense.veff_matrix(EffectiveSpec(Q, 2.3)) @ v),
    ]
    for got, want in pairs:
        assert np.max(np.abs(got.amplitudes - want)) < 1e-12


def test_array_inputs_return_arrays(rng):
    J = generate_couplings(4, 1.0, 1)
    v = random_state(4, rng).amplitudes
    out = apply_dipolar(J, v)
    assert isinstance(out, np.ndarray)
    buf = np.empty_like(v)
    assert apply_zeeman(1.0, v, n_spins=4, out=buf) is buf


def _support(v, n):
    return set(popcounts(n)[np.abs(v) > 1e-13])


@pytest.mark.parametrize("n", range(2, 9))
def test_selection_rules_exhaustive_over_sectors(n):
    J = generate_couplings(n, 1.0, n)
    Q = generate_couplings(n, 1.0, n, "double_quantum")
    pc = popcounts(n)
    rng = np.random.default_rng(n)
    for k in range(n + 1):
        v = np.where(pc == k, rng.normal(size=1 << n) + 0j, 0)
        v /= np.linalg.norm(v)
        assert _support(apply_dipolar(J, v), n) <= {k}
        assert _support(apply_veff(EffectiveSpec(Q, 1.0), v), n) <= {k}
        assert _support(apply_dq(Q, v), n) <= {k - 2, k + 2}


@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_hermiticity_of_every_term(n, seed):
    rng = np.random.default_rng(seed)
    psi, phi = random_state(n, rng).amplitudes, random_state(n, rng).amplitudes
    J = generate_couplings(n, 1.0, seed)
    Q = generate_couplings(n, 1.0, seed, "double_quantum")
    ops = [
        lambda v: apply_dipolar(J, v),
        lambda v: apply_zeeman(1.3, v, n_spins=n),
        lambda v: apply_dq(Q, v),
        lambda v: apply_veff(EffectiveSpec(Q, 0.9), v),
    ]
    for op in ops:
        assert abs(np.vdot(phi, op(psi)) - np.conj(np.vdot(psi, op(phi)))) < 1e-12


@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_dipolar_conserves_subspace_weights_under_evolution(n, seed):
    from spinecho.evolution import propagate

    rng = np.random.default_rng(seed)
    psi = random_state(n, rng)
    spec = HamiltonianSpec(generate_couplings(n, 1.0, seed), 1, 0.5)
    out = propagate(spec, psi, 1.3)
    w0, w1 = subspace_weights(psi), subspace_weights(out)
    for nu in w0:
        assert w1.get(nu, 0.0) == pytest.approx(w0[nu], abs=1e-10)


def test_operator_spectral_bound_dominates(rng):
    spec = HamiltonianSpec(generate_couplings(6, 1.0, 1), 1, 2.0,
                           generate_couplings(6, 1.0, 1, "double_quantum"))
    op = build_operator(spec)
    w = np.linalg.eigvalsh(dense.hamiltonian_matrix(spec))
    assert op.spectral_bound() >= np.max(np.abs(w)) - 1e-12


# --- second moments -------------------------------------------------------------


def test_local_second_moment_uniform_closed_form():
    n = 9
    J = CouplingMatrix.uniform(n, 1 / math.sqrt(n))
    for i in range(1, n + 1):
        assert local_second_moment(J, i) == pytest.approx((n - 1) / (4 * n), rel=1e-14)
    assert local_second_moment(two_spin(1.0), 1) == 0.25
    with pytest.raises(IndexError):
        local_second_moment(J, n + 1)


def test_global_second_moment_examples():
    assert global_second_moment(two_spin(1.0)) == pytest.approx(0.125)
    J = generate_couplings(16, 1.0, 4)
    assert global_second_moment(J) == pytest.approx(1.0, rel=0.1)
    assert global_second_moment(J.scaled(2.0)) == pytest.approx(4 * global_second_moment(J))


@pytest.mark.parametrize("n", [8, 12, 16])
def test_generated_local_moments_within_bounds(n):
    J = generate_couplings(n, 1.0, 1)
    s = np.array([local_second_moment(J, i) for i in range(1, n + 1)])
    lo, hi = 0.81 * (n - 1) / (4 * n), 1.21 * (n - 1) / (4 * n)
    assert np.all((s >= lo) & (s <= hi))


def test_veff_moment_matches_dense_and_scaling():
    Q = generate_couplings(6, 1.0, 8, "double_quantum")
    m = veff_second_moment(EffectiveSpec(Q, 2.0))
    V = dense.veff_matrix(EffectiveSpec(Q, 2.0))
    assert m.exact and m.n_states == 64
    assert m.value == pytest.approx(np.sum(V * V) / 64, rel=1e-12)
    assert veff_second_moment(EffectiveSpec(Q.scaled(2), 2.0)).value == pytest.approx(16 * m.value, rel=1e-12)
    assert veff_second_moment(EffectiveSpec(Q, 4.0)).value == pytest.approx(m.value / 4, rel=1e-12)
    assert m.a > 0


def test_veff_moment_sampling_estimate():
    Q = generate_couplings(11, 1.0, 8, "double_quantum")
    m = veff_second_moment(EffectiveSpec(Q, 2.0), n_samples=256, seed=1)
    assert not m.exact and m.n_states == 256 and m.value > 0


def test_gamma_eff_and_sigma_eff():
    assert gamma_eff_estimate(0.0, 1.0, 2.0, 1.0) == 0.0
    g = gamma_eff_estimate(0.5, 2.0, 3.0, 1.5)
    assert gamma_eff_estimate(1.0, 2.0, 3.0, 1.5) == pytest.approx(16 * g)
    assert gamma_eff_estimate(0.5, 4.0, 3.0, 1.5) == pytest.approx(g / 4)
    assert g == pytest.approx(2 * math.pi * (3.0 * 0.25 / 4.0) ** 2 / 1.5)
    with pytest.raises(ValueError):
        gamma_eff_estimate(1.0, 0.0, 1.0, 1.0)
    assert sigma_eff(1.0, 4.0) == 0.25
    assert sigma_eff(1.0, 0.0) == math.inf
    assert sigma_eff(0.0, 0.0) == 0.0
