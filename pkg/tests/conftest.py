import numpy as np
import pytest
from hypothesis import settings

from spinecho.basis import StateVector
from spinecho.hamiltonian import HamiltonianSpec, generate_couplings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_state(n, rng) -> StateVector:
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return StateVector(n, v / np.linalg.norm(v))


def random_spec(n, rng, sign=None, with_dq=None) -> HamiltonianSpec:
    seed = int(rng.integers(1 << 30))
    J = generate_couplings(n, 1.0, seed)
    sign = int(rng.choice([-1, 1])) if sign is None else sign
    with_dq = bool(rng.integers(2)) if with_dq is None else with_dq
    Q = generate_couplings(n, float(rng.uniform(0.2, 1.5)), seed, "double_quantum") if with_dq else None
    return HamiltonianSpec(J, sign, float(rng.uniform(0, 3)), Q)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
