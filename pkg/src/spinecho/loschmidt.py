"""Nonequilibrium initial state and echo / forward polarization traces."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Literal, Optional

import numpy as np

from spinecho.basis import StateVector, _polarization
from spinecho.evolution import (
    EchoPropagator,
    PropagationError,
    PropagatorConfig,
    TimeGrid,
    forward_spec,
    make_propagator,
)
from spinecho.hamiltonian import HamiltonianSpec, sigma_eff

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NeqStateSpec:
    n_spins: int
    phase_seed: int = 0

    def __post_init__(self):
        if self.n_spins < 2:
            raise ValueError("need at least two spins")


def build_neq_state(spec: NeqStateSpec) -> StateVector:
    """Spin 1 up, times an equal-weight random-phase superposition of the rest."""
    n = spec.n_spins
    rng = np.random.default_rng(spec.phase_seed)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=1 << (n - 1))
    amps = np.zeros(1 << n, dtype=np.complex128)
    # site 1 is bit 0, so the remaining spins index the odd entries
    amps[1::2] = np.exp(1j * phases) / math.sqrt(1 << (n - 1))
    return StateVector(n, amps)


@dataclass
class LETrace:
    times: np.ndarray
    m11: np.ndarray
    kind: Literal["echo", "forward"]
    params: dict[str, Any] = field(default_factory=dict)
    status: str = "ok"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.m11 = np.asarray(self.m11, dtype=float)
        if self.times.shape != self.m11.shape:
            raise ValueError("times and m11 must have equal length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trace times must be strictly increasing")

    def __len__(self) -> int:
        return self.times.size

    @property
    def n_spins(self) -> int:
        return int(self.params["n_spins"])


def trace_params(spec0: HamiltonianSpec, neq: NeqStateSpec, cfg: PropagatorConfig) -> dict[str, Any]:
    jdq = spec0.dq.j0 if spec0.dq is not None else 0.0
    return {
        "n_spins": spec0.n_spins,
        "j0": spec0.dipolar.j0,
        "omega1": spec0.zeeman_omega1,
        "jdq": jdq,
        "sigma_eff": sigma_eff(jdq, spec0.zeeman_omega1),
        "coupling_seed": spec0.dipolar.seed,
        "dq_seed": spec0.dq.seed if spec0.dq is not None else None,
        "phase_seed": neq.phase_seed,
        "method": cfg.method,
        "max_krylov_dim": cfg.max_krylov_dim,
        "step_tolerance": cfg.step_tolerance,
        "dt_max": cfg.dt_max,
    }


def _times(grid) -> np.ndarray:
    return grid.times if isinstance(grid, TimeGrid) else np.asarray(grid, dtype=float)


def _echo_samples(echo: EchoPropagator, psi: np.ndarray, times: np.ndarray,
                  stop_below: Optional[float]) -> tuple[list[float], str]:
    m11: list[float] = []
    t_prev = 0.0
    for t in times:
        t_r = 0.5 * t
        try:
            psi = echo.forward.evolve(psi, t_r - t_prev)
            t_prev = t_r
            m11.append(_polarization(echo.backward.evolve(psi, t_r), 0))
        except PropagationError as exc:
            log.error("echo trace aborted at t=%g: %s", t, exc)
            return m11, "partial"
        if stop_below is not None and m11[-1] < stop_below:
            return m11, "truncated"
    return m11, "ok"


def echo_trace(
    spec0: HamiltonianSpec,
    neq: NeqStateSpec,
    grid,
    cfg: Optional[PropagatorConfig] = None,
    stop_below: Optional[float] = None,
    echo: Optional[EchoPropagator] = None,
) -> LETrace:
    """M_{1,1}(t) sampled at total times t = 2 t_R.

    The forward leg is advanced incrementally between samples; each backward
    leg restarts from the forward state at its own t_R.  With ``stop_below``
    the trace ends at the first sample under that value and is marked
    ``truncated``.  A prebuilt ``echo`` propagator for ``spec0`` may be
    passed to reuse its setup across traces.
    """
    cfg = cfg or PropagatorConfig()
    times = _times(grid)
    if spec0.n_spins != neq.n_spins:
        raise ValueError("state and Hamiltonian disagree on N")
    echo = echo or EchoPropagator(spec0, cfg)
    m11, status = _echo_samples(echo, build_neq_state(neq).amplitudes, times, stop_below)
    params = trace_params(spec0, neq, cfg)
    params["stop_below"] = stop_below
    return LETrace(times[: len(m11)], np.array(m11), "echo", params, status)


def scan_crossing(
    spec0: HamiltonianSpec,
    neq: NeqStateSpec,
    cfg: Optional[PropagatorConfig] = None,
    threshold: float = 2.0 / 3.0,
    t_limit: float = 1e5,
    t_first: float = 0.05,
    echo: Optional[EchoPropagator] = None,
) -> LETrace:
    """Geometric scan from ``t_first`` to ``t_limit`` that stops below ``threshold``.

    The returned trace is ``truncated`` if the crossing was bracketed, in
    which case its last time is the first scan point under the threshold.
    """
    cfg = cfg or PropagatorConfig()
    echo = echo or EchoPropagator(spec0, cfg)
    scan = np.concatenate(([0.0], np.geomspace(t_first, t_limit, 120)))
    return echo_trace(spec0, neq, scan, cfg, stop_below=threshold, echo=echo)


def decay_trace(
    spec0: HamiltonianSpec,
    neq: NeqStateSpec,
    cfg: Optional[PropagatorConfig] = None,
    threshold: float = 2.0 / 3.0,
    n_samples: int = 400,
    t_limit: float = 1e5,
    t_first: float = 0.05,
) -> LETrace:
    """Uniformly sampled echo trace ending just past the first drop below ``threshold``.

    A geometric scan brackets the crossing; the returned trace then resolves
    [0, bracket] with ``n_samples`` points.  Status is ``no-decay`` if the
    echo stays above threshold up to ``t_limit``.
    """
    cfg = cfg or PropagatorConfig()
    echo = EchoPropagator(spec0, cfg)
    coarse = scan_crossing(spec0, neq, cfg, threshold, t_limit, t_first, echo)
    if coarse.status != "truncated":
        coarse.status = "no-decay" if coarse.status == "ok" else coarse.status
        return coarse
    fine = np.linspace(0.0, coarse.times[-1], n_samples)
    trace = echo_trace(spec0, neq, fine, cfg, stop_below=threshold, echo=echo)
    trace.params["t_limit"] = t_limit
    return trace


def forward_trace(
    spec0: HamiltonianSpec,
    neq: NeqStateSpec,
    grid,
    cfg: Optional[PropagatorConfig] = None,
) -> LETrace:
    """Local polarization of site 1 under the unperturbed forward evolution."""
    cfg = cfg or PropagatorConfig()
    times = _times(grid)
    prop = make_propagator(forward_spec(spec0), cfg)
    psi = build_neq_state(neq).amplitudes
    params = trace_params(spec0, neq, cfg)
    m11 = []
    t_prev = 0.0
    status = "ok"
    for t in times:
        try:
            psi = prop.evolve(psi, t - t_prev)
        except PropagationError as exc:
            log.error("forward trace aborted at t=%g: %s", t, exc)
            status = "partial"
            break
        t_prev = t
        m11.append(_polarization(psi, 0))
    params["stop_below"] = None
    return LETrace(times[: len(m11)], np.array(m11), "forward", params, status)
