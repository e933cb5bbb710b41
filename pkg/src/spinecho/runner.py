"""Sweep execution, trace storage and re-analysis of stored traces.

``run`` simulates every (point, realization) pair of a RunConfig, writes one
trace file per realization and derives the summary from those traces with
the same routine ``analyze`` uses, so the two always agree.
"""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from spinecho.analysis import FitError, classify_decay, is_flat, plateau, tau_phi
from spinecho.config import RunConfig, WorkItem, check_resources, work_items
from spinecho.evolution import EchoPropagator
from spinecho.hamiltonian import HamiltonianSpec, generate_couplings, sigma_eff
from spinecho.io import (
    ProvenanceError,
    atomic_write,
    fmt,
    summary_csv,
    read_trace,
    trace_csv,
    trace_json,
)
from spinecho.loschmidt import LETrace, NeqStateSpec, echo_trace, forward_trace, scan_crossing

log = logging.getLogger(__name__)

FAILED = ("error", "partial")
REQUIRED_KEYS = (
    "kind", "status", "n_spins", "j0", "omega1", "jdq", "sigma_eff", "coupling_seed",
    "phase_seed", "base_seed", "point_index", "realization_index", "tail_fraction",
)


@dataclass
class SweepResult:
    rows: list[dict[str, Any]]
    trace_files: list[Path]
    summary_files: list[Path]
    n_failed: int = 0
    n_warnings: int = 0
    records: list[dict[str, Any]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.n_failed == 0


# --- simulation ---------------------------------------------------------------


def build_spec(n_spins: int, j0: float, omega1: float, jdq: float, coupling_seed: int) -> HamiltonianSpec:
    J = generate_couplings(n_spins, j0, coupling_seed, "dipolar")
    Q = generate_couplings(n_spins, jdq, coupling_seed, "double_quantum") if jdq > 0 else None
    return HamiltonianSpec(J, 1, omega1, Q)


def _sweep_times(cfg: RunConfig, spec0, neq, echo) -> np.ndarray:
    g = cfg.grid
    t_end = g.t_max
    if g.tau_multiple > 0 and spec0.dq is not None:
        scan = scan_crossing(spec0, neq, cfg.propagator, t_limit=g.t_limit, echo=echo)
        if scan.status == "truncated":
            t_end = min(g.t_limit, max(g.t_max, g.tau_multiple * float(scan.times[-1])))
    return np.linspace(0.0, t_end, g.n_samples)


def simulate(cfg: RunConfig, item: WorkItem) -> tuple[dict[str, str], np.ndarray, np.ndarray]:
    """One realization; failures come back as an empty trace with status ``error``."""
    kind = "forward" if cfg.mode == "forward" else "echo"
    prov: dict[str, Any] = {f"config.{k}": v for k, v in cfg.items()}
    prov.update(
        kind=kind,
        n_spins=item.n_spins,
        j0=float(cfg.j0),
        omega1=float(item.omega1),
        jdq=float(item.jdq),
        sigma_eff=sigma_eff(item.jdq, item.omega1),
        coupling_seed=item.coupling_seed,
        dq_seed=item.coupling_seed if item.jdq > 0 else None,
        phase_seed=item.phase_seed,
        base_seed=cfg.ensemble.base_seed,
        point_index=item.point_index,
        realization_index=item.realization_index,
        tail_fraction=float(cfg.tail_fraction),
    )
    times = np.empty(0)
    m11 = np.empty(0)
    try:
        spec0 = build_spec(item.n_spins, cfg.j0, item.omega1, item.jdq, item.coupling_seed)
        neq = NeqStateSpec(item.n_spins, item.phase_seed)
        if kind == "forward":
            tr = forward_trace(spec0, neq, np.linspace(0.0, cfg.grid.t_max, cfg.grid.n_samples), cfg.propagator)
        else:
            echo = EchoPropagator(spec0, cfg.propagator)
            grid = (_sweep_times(cfg, spec0, neq, echo) if cfg.mode == "sweep"
                    else np.linspace(0.0, cfg.grid.t_max, cfg.grid.n_samples))
            tr = echo_trace(spec0, neq, grid, cfg.propagator, echo=echo)
        times, m11 = tr.times, tr.m11
        prov.update(status=tr.status, message="")
    except Exception as exc:  # recorded per point, never silently dropped
        log.error("point %d realization %d failed: %s", item.point_index, item.realization_index, exc)
        prov.update(status="error", message=f"{type(exc).__name__}: {exc}".replace("\n", " "))
    return {k: fmt(v) for k, v in prov.items()}, times, m11


def trace_name(prov: dict[str, str]) -> str:
    return f"trace_N{prov['n_spins']}_p{int(prov['point_index']):04d}_r{int(prov['realization_index']):03d}"


# --- analysis -----------------------------------------------------------------


def _require(prov: dict[str, str], source: str) -> None:
    missing = [k for k in REQUIRED_KEYS if k not in prov]
    if missing:
        raise ProvenanceError(f"{source}: provenance lacks {', '.join(missing)}")
    try:
        w, j, s = float(prov["omega1"]), float(prov["jdq"]), float(prov["sigma_eff"])
    except ValueError as exc:
        raise ProvenanceError(f"{source}: unreadable provenance value ({exc})") from None
    expect = sigma_eff(j, w)
    if not (s == expect or (math.isinf(s) and math.isinf(expect))
            or math.isclose(s, expect, rel_tol=1e-12)):
        raise ProvenanceError(f"{source}: sigma_eff={s} inconsistent with jdq={j}, omega1={w}")


def analyze_record(prov: dict[str, str], times: np.ndarray, m11: np.ndarray,
                   tail_fraction: Optional[float] = None, source: str = "trace") -> dict[str, Any]:
    """Summary row plus fit details for one stored trace."""
    _require(prov, source)
    tail = float(prov["tail_fraction"]) if tail_fraction is None else tail_fraction
    row: dict[str, Any] = {
        "n_spins": int(prov["n_spins"]),
        "omega1": float(prov["omega1"]),
        "jdq": float(prov["jdq"]),
        "sigma_eff": float(prov["sigma_eff"]),
        "coupling_seed": int(prov["coupling_seed"]),
        "phase_seed": int(prov["phase_seed"]),
        "tau_phi": None,
        "plateau_mean": None,
        "plateau_stderr": None,
        "decay_model": "",
        "status": prov["status"],
    }
    extra: dict[str, Any] = {"fit": None, "plateau_flat": None, "note": prov.get("message", "")}
    if prov["status"] == "error" or times.size == 0:
        row["status"] = "error"
        return {"row": row, **extra}
    trace = LETrace(times, m11, prov["kind"], dict(prov), prov["status"])
    try:
        row["plateau_mean"], row["plateau_stderr"] = plateau(trace, tail)
        extra["plateau_flat"] = is_flat(trace, tail)
    except FitError as exc:
        extra["note"] = str(exc)
    row["tau_phi"] = tau_phi(trace)
    base = "partial" if prov["status"] == "partial" else "ok"
    if row["tau_phi"] is None:
        row["status"] = "partial" if base == "partial" else "no-decay"
        return {"row": row, **extra}
    try:
        fit = classify_decay(trace, tail_fraction=tail)
        row["decay_model"] = fit.model
        extra["fit"] = fit.to_dict()
        row["status"] = base
    except FitError as exc:
        row["status"] = "partial" if base == "partial" else "fit-error"
        extra["note"] = str(exc)
    return {"row": row, **extra}


def _sort_key(rec: dict[str, Any]):
    return (rec["row"]["n_spins"], rec["point_index"], rec["realization_index"])


def write_summaries(records: list[dict[str, Any]], out_dir: Path, formats: Sequence[str]) -> list[Path]:
    """One summary per N when traces of several sizes are present."""
    out_dir.mkdir(parents=True, exist_ok=True)
    groups: dict[int, list] = defaultdict(list)
    for rec in sorted(records, key=_sort_key):
        groups[rec["row"]["n_spins"]].append(rec)
    paths = []
    for n, recs in sorted(groups.items()):
        stem = "summary" if len(groups) == 1 else f"summary_N{n}"
        if "csv" in formats:
            p = out_dir / f"{stem}.csv"
            atomic_write(p, summary_csv(r["row"] for r in recs))
            paths.append(p)
        if "json" in formats:
            p = out_dir / f"{stem}.json"
            js = [{**{k: _json_value(v) for k, v in r["row"].items()},
                   "point_index": r["point_index"], "realization_index": r["realization_index"],
                   "trace": r["trace"], "plateau_flat": r["plateau_flat"],
                   "fit": _json_value(r["fit"]), "note": r["note"]} for r in recs]
            atomic_write(p, json.dumps(js, indent=1, allow_nan=True) + "\n")
            paths.append(p)
    return paths


def _json_value(v):
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return fmt(v)
    return v


def _tally(records) -> tuple[int, int]:
    failed = sum(r["row"]["status"] in FAILED for r in records)
    warned = sum(r["row"]["status"] not in ("ok",) + FAILED for r in records)
    return failed, warned


# --- entry points -------------------------------------------------------------


def _run_one(cfg: RunConfig, item: WorkItem):
    return item, simulate(cfg, item)


def run(cfg: RunConfig, workers: int = 1) -> SweepResult:
    """Execute every point of ``cfg`` and write traces plus summaries."""
    if cfg.mode == "analyze":
        return analyze(cfg.inputs or (cfg.output_dir,), Path(cfg.output_dir), cfg.formats)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    check_resources(cfg)
    out = Path(cfg.output_dir)
    trace_dir = out / "traces"
    trace_dir.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "config.ini", _config_text(cfg))
    items = list(work_items(cfg))
    records, files = [], []

    def store(item, result):
        prov, t, m = result
        name = trace_name(prov)
        rel = []
        if "csv" in cfg.formats:
            atomic_write(trace_dir / f"{name}.csv", trace_csv(prov, t, m))
            rel.append(f"traces/{name}.csv")
        if "json" in cfg.formats:
            atomic_write(trace_dir / f"{name}.json", trace_json(prov, t, m))
            rel.append(f"traces/{name}.json")
        files.extend(out / r for r in rel)
        rec = analyze_record(prov, t, m, source=name)
        rec.update(point_index=item.point_index, realization_index=item.realization_index, trace=rel[0])
        records.append(rec)

    if workers == 1:
        for item in items:
            store(*_run_one(cfg, item))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, cfg, item) for item in items]
            for fut in as_completed(futures):
                store(*fut.result())
    summaries = write_summaries(records, out, cfg.formats)
    failed, warned = _tally(records)
    rows = [r["row"] for r in sorted(records, key=_sort_key)]
    return SweepResult(rows, sorted(files), summaries, failed, warned, sorted(records, key=_sort_key))


def _config_text(cfg: RunConfig) -> str:
    sections: dict[str, list[str]] = defaultdict(list)
    for key, value in cfg.items():
        sec, name = key.split(".", 1)
        sections[sec].append(f"{name} = {value}")
    if cfg.inputs:
        sections["analysis"].append(f"inputs = {' '.join(cfg.inputs)}")
    return "\n".join(f"[{s}]\n" + "\n".join(lines) + "\n" for s, lines in sections.items())


def find_traces(inputs: Iterable) -> list[Path]:
    found: dict[Path, Path] = {}
    for entry in inputs:
        p = Path(entry)
        if p.is_dir():
            cands = sorted(p.rglob("trace_*.csv")) + sorted(p.rglob("trace_*.json"))
        elif p.exists():
            cands = [p]
        else:
            raise FileNotFoundError(f"no such trace file or directory: {p}")
        for c in cands:
            # prefer the CSV when both formats of one trace exist
            key = c.with_suffix("")
            if key not in found or c.suffix == ".csv":
                found[key] = c
    return sorted(found.values())


def analyze(inputs: Iterable, out_dir: Path, formats: Sequence[str] = ("csv",),
            tail_fraction: Optional[float] = None) -> SweepResult:
    """Re-derive summaries from stored traces; refuses traces without provenance."""
    paths = find_traces(inputs)
    if not paths:
        raise ProvenanceError("no trace files found")
    records = []
    for path in paths:
        prov, t, m = read_trace(path)
        rec = analyze_record(prov, t, m, tail_fraction, source=str(path))
        rel = f"traces/{path.name}" if path.parent.name == "traces" else str(path)
        rec.update(point_index=int(prov["point_index"]),
                   realization_index=int(prov["realization_index"]), trace=rel)
        records.append(rec)
    summaries = write_summaries(records, Path(out_dir), formats)
    failed, warned = _tally(records)
    records.sort(key=_sort_key)
    return SweepResult([r["row"] for r in records], paths, summaries, failed, warned, records)
