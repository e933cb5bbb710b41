"""Run configuration: a sectioned key-value file, validated field by field.

Example::

    [run]
    mode = sweep

    [system]
    n_spins = 12
    j0 = 1.0
    omega1 = 100 33.3 10
    jdq = 1.0

    [grid]
    t_max = 60
    n_samples = 200

    [ensemble]
    n_coupling_seeds = 2
    n_phase_seeds = 1
    base_seed = 2024

Every key, including the ones left at their defaults, is echoed into the
provenance header of each output file.
"""

from __future__ import annotations

import configparser
import hashlib
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Optional

from spinecho.basis import MAX_SPINS
from spinecho.evolution import DENSE_LIMIT, SPECTRAL_LIMIT, PropagatorConfig

MODES = ("echo", "forward", "sweep", "analyze")
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    """Invalid or incomplete run configuration; the message names the field."""


class ResourceError(ConfigError):
    pass


@dataclass(frozen=True)
class GridConfig:
    t_max: float = 60.0
    n_samples: int = 200
    # sweep mode only: stretch t_max to this many decay times, scanning up to t_limit
    tau_multiple: float = 0.0
    t_limit: float = 1e4


@dataclass(frozen=True)
class EnsembleConfig:
    n_coupling_seeds: int = 4
    n_phase_seeds: int = 1
    base_seed: int = 0
    # derive disorder from the N index instead of the point index
    common_disorder: bool = False


@dataclass(frozen=True)
class RunConfig:
    mode: str
    n_spins: tuple[int, ...]
    omega1: tuple[float, ...]
    jdq: tuple[float, ...]
    j0: float = 1.0
    grid: GridConfig = field(default_factory=GridConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    propagator: PropagatorConfig = field(default_factory=PropagatorConfig)
    tail_fraction: float = 0.25
    output_dir: str = "out"
    formats: tuple[str, ...] = ("csv",)
    inputs: tuple[str, ...] = ()

    def __post_init__(self):
        _check(self.mode in MODES, "run.mode", f"must be one of {', '.join(MODES)}")
        if self.mode != "analyze":
            for name in ("n_spins", "omega1", "jdq"):
                _check(len(getattr(self, name)) > 0, f"system.{name}", "list must be non-empty")
        for n in self.n_spins:
            _check(n >= 2, "system.n_spins", f"{n} is below 2")
        for w in self.omega1:
            _check(w >= 0 and math.isfinite(w), "system.omega1", f"{w} must be finite and >= 0")
        for j in self.jdq:
            _check(j >= 0 and math.isfinite(j), "system.jdq", f"{j} must be finite and >= 0")
        _check(self.j0 > 0, "system.j0", "must be positive")
        g = self.grid
        _check(g.t_max > 0, "grid.t_max", "must be positive")
        _check(g.n_samples >= 2, "grid.n_samples", "need at least two samples")
        _check(g.tau_multiple >= 0, "grid.tau_multiple", "must be >= 0")
        _check(g.t_limit >= g.t_max, "grid.t_limit", "must be at least grid.t_max")
        e = self.ensemble
        _check(e.n_coupling_seeds >= 1, "ensemble.n_coupling_seeds", "must be >= 1")
        _check(e.n_phase_seeds >= 1, "ensemble.n_phase_seeds", "must be >= 1")
        _check(e.base_seed >= 0, "ensemble.base_seed", "must be >= 0")
        _check(0 < self.tail_fraction <= 0.5, "analysis.tail_fraction", "must lie in (0, 0.5]")
        _check(len(self.formats) > 0, "output.formats", "list must be non-empty")
        for f in self.formats:
            _check(f in FORMATS, "output.formats", f"unknown format {f!r}")

    @property
    def n_realizations(self) -> int:
        return self.ensemble.n_coupling_seeds * self.ensemble.n_phase_seeds

    def with_overrides(self, out: Optional[str] = None, seed: Optional[int] = None) -> "RunConfig":
        cfg = self
        if out is not None:
            cfg = replace(cfg, output_dir=str(out))
        if seed is not None:
            cfg = replace(cfg, ensemble=replace(cfg.ensemble, base_seed=int(seed)))
        return cfg

    def items(self) -> list[tuple[str, str]]:
        """Every configuration key as ``section.key`` with its effective value."""
        g, e, p = self.grid, self.ensemble, self.propagator
        return [
            ("run.mode", self.mode),
            ("system.n_spins", _join(self.n_spins)),
            ("system.j0", repr(self.j0)),
            ("system.omega1", _join(self.omega1)),
            ("system.jdq", _join(self.jdq)),
            ("grid.t_max", repr(g.t_max)),
            ("grid.n_samples", str(g.n_samples)),
            ("grid.tau_multiple", repr(g.tau_multiple)),
            ("grid.t_limit", repr(g.t_limit)),
            ("ensemble.n_coupling_seeds", str(e.n_coupling_seeds)),
            ("ensemble.n_phase_seeds", str(e.n_phase_seeds)),
            ("ensemble.base_seed", str(e.base_seed)),
            ("ensemble.common_disorder", str(e.common_disorder).lower()),
            ("propagator.method", p.method),
            ("propagator.max_krylov_dim", str(p.max_krylov_dim)),
            ("propagator.step_tolerance", repr(p.step_tolerance)),
            ("propagator.dt_max", repr(p.dt_max)),
            ("analysis.tail_fraction", repr(self.tail_fraction)),
            ("output.directory", self.output_dir),
            ("output.formats", " ".join(self.formats)),
        ]


def _check(ok: bool, name: str, msg: str) -> None:
    if not ok:
        raise ConfigError(f"{name}: {msg}")


def _join(values) -> str:
    return " ".join(repr(v) if isinstance(v, float) else str(v) for v in values)


def _split(raw: str) -> list[str]:
    return raw.replace(",", " ").split()


_KNOWN = {
    "run": {"mode"},
    "system": {"n_spins", "j0", "omega1", "jdq"},
    "grid": {"t_max", "n_samples", "tau_multiple", "t_limit"},
    "ensemble": {"n_coupling_seeds", "n_phase_seeds", "base_seed", "common_disorder"},
    "propagator": {"method", "max_krylov_dim", "step_tolerance", "dt_max"},
    "analysis": {"tail_fraction", "inputs"},
    "output": {"directory", "formats"},
}


class _Reader:
    def __init__(self, parser: configparser.ConfigParser):
        self.p = parser

    def _raw(self, section, key):
        if self.p.has_option(section, key):
            return self.p.get(section, key)
        return None

    def get(self, section, key, conv, default):
        raw = self._raw(section, key)
        if raw is None:
            if default is _REQUIRED:
                raise ConfigError(f"{section}.{key}: required key is missing")
            return default
        try:
            return conv(raw.strip())
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: cannot parse {raw!r} ({exc})") from None

    def get_list(self, section, key, conv, default):
        raw = self._raw(section, key)
        if raw is None:
            if default is _REQUIRED:
                raise ConfigError(f"{section}.{key}: required key is missing")
            return tuple(default)
        try:
            return tuple(conv(x) for x in _split(raw))
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: cannot parse {raw!r} ({exc})") from None


_REQUIRED = object()


def _bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config: {exc}") from None
    for section in parser.sections():
        if section not in _KNOWN:
            raise ConfigError(f"{section}: unknown section")
        for key in parser[section]:
            if key not in _KNOWN[section]:
                raise ConfigError(f"{section}.{key}: unknown key")
    r = _Reader(parser)
    mode = r.get("run", "mode", str, _REQUIRED)
    needs_system = mode != "analyze"
    req = _REQUIRED if needs_system else ()
    grid = GridConfig(
        t_max=r.get("grid", "t_max", float, GridConfig.t_max),
        n_samples=r.get("grid", "n_samples", int, GridConfig.n_samples),
        tau_multiple=r.get("grid", "tau_multiple", float, GridConfig.tau_multiple),
        t_limit=r.get("grid", "t_limit", float, GridConfig.t_limit),
    )
    ensemble = EnsembleConfig(
        n_coupling_seeds=r.get("ensemble", "n_coupling_seeds", int, 4),
        n_phase_seeds=r.get("ensemble", "n_phase_seeds", int, 1),
        base_seed=r.get("ensemble", "base_seed", int, 0),
        common_disorder=r.get("ensemble", "common_disorder", _bool, False),
    )
    defaults = PropagatorConfig()
    try:
        prop = PropagatorConfig(
            method=r.get("propagator", "method", str, defaults.method),
            max_krylov_dim=r.get("propagator", "max_krylov_dim", int, defaults.max_krylov_dim),
            step_tolerance=r.get("propagator", "step_tolerance", float, defaults.step_tolerance),
            dt_max=r.get("propagator", "dt_max", float, defaults.dt_max),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"propagator: {exc}") from None
    return RunConfig(
        mode=mode,
        n_spins=r.get_list("system", "n_spins", int, req),
        omega1=r.get_list("system", "omega1", float, req),
        jdq=r.get_list("system", "jdq", float, req),
        j0=r.get("system", "j0", float, 1.0),
        grid=grid,
        ensemble=ensemble,
        propagator=prop,
        tail_fraction=r.get("analysis", "tail_fraction", float, 0.25),
        output_dir=r.get("output", "directory", str, "out"),
        formats=r.get_list("output", "formats", str, ("csv",)),
        inputs=r.get_list("analysis", "inputs", str, ()),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


# --- seeds --------------------------------------------------------------------


def derive_seed(base_seed: int, point_index: int, realization_index: int, stream: str) -> int:
    """sha256 of ``base/point/realization/stream``, first 8 bytes, top bit cleared."""
    key = f"{base_seed}/{point_index}/{realization_index}/{stream}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") >> 1


@dataclass(frozen=True)
class WorkItem:
    point_index: int
    realization_index: int
    n_spins: int
    omega1: float
    jdq: float
    coupling_seed: int
    phase_seed: int


def work_items(cfg: RunConfig) -> Iterator[WorkItem]:
    """All (point, realization) pairs in a fixed order.

    Points enumerate (N, omega1, jdq) with N outermost.  Realization r pairs
    coupling draw r // n_phase_seeds with phase draw r % n_phase_seeds.
    """
    e = cfg.ensemble
    point = 0
    for n_idx, n in enumerate(cfg.n_spins):
        for w in cfg.omega1:
            for j in cfg.jdq:
                disorder_point = n_idx if e.common_disorder else point
                for c in range(e.n_coupling_seeds):
                    cseed = derive_seed(e.base_seed, disorder_point, c, "coupling")
                    for p in range(e.n_phase_seeds):
                        r = c * e.n_phase_seeds + p
                        pseed = derive_seed(e.base_seed, disorder_point, r, "phase")
                        yield WorkItem(point, r, n, w, j, cseed, pseed)
                point += 1


# --- memory guard -------------------------------------------------------------


def memory_estimate(n_spins: int, prop: PropagatorConfig, with_dq: bool = True) -> int:
    """Rough peak bytes for one echo trace with the chosen propagator."""
    dim = 1 << n_spins
    if prop.method == "dense_oracle":
        return 8 * dim * dim * 4
    if prop.method == "spectral":
        block = dim // 2 if with_dq else math.comb(n_spins, n_spins // 2)
        # eigenvectors of both legs plus one eigh workspace of the largest block
        return 8 * (2 * dim * block + 2 * block * block) + 64 * dim
    # Krylov basis per leg, a few work vectors and the pair tables
    return 16 * dim * (2 * (prop.max_krylov_dim + 1) + 8)


def available_memory() -> Optional[int]:
    try:
        return os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_PHYS_PAGES")
    except (ValueError, OSError, AttributeError):
        return None


def check_resources(cfg: RunConfig) -> None:
    """Reject sizes that cannot run, before any work starts."""
    limit = available_memory()
    method = cfg.propagator.method
    with_dq = any(j > 0 for j in cfg.jdq)
    for n in cfg.n_spins:
        need = memory_estimate(n, cfg.propagator, with_dq)
        gib = need / 2**30
        if n > MAX_SPINS:
            raise ResourceError(
                f"system.n_spins: N={n} exceeds the limit of {MAX_SPINS} (needs about {gib:.1f} GiB)")
        if method == "spectral" and n > SPECTRAL_LIMIT:
            raise ResourceError(
                f"system.n_spins: N={n} too large for spectral propagation "
                f"(limit {SPECTRAL_LIMIT}, needs about {gib:.1f} GiB); use krylov")
        if method == "dense_oracle" and n > DENSE_LIMIT:
            raise ResourceError(f"system.n_spins: N={n} too large for dense_oracle (limit {DENSE_LIMIT})")
        if limit is not None and need > limit:
            raise ResourceError(
                f"system.n_spins: N={n} needs about {gib:.1f} GiB, "
                f"machine has {limit / 2**30:.1f} GiB")
