"""Text formats: trace files with provenance headers, coupling matrices, summaries.

A trace CSV starts with ``# key=value`` lines, then a ``t,m11`` header and
one row per sample.  Floats are written with ``repr`` so a read-back is
bit-exact.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

from spinecho.hamiltonian import CouplingMatrix

TRACE_MAGIC = "spinecho-trace v1"
COUPLING_MAGIC = "spinecho-couplings v1"
SUMMARY_COLUMNS = (
    "n_spins", "omega1", "jdq", "sigma_eff", "coupling_seed", "phase_seed",
    "tau_phi", "plateau_mean", "plateau_stderr", "decay_model", "status",
)


class ProvenanceError(ValueError):
    """A stored file lacks the header needed to reproduce or analyze it."""


def fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "nan" if math.isnan(v) else repr(v)
    return str(value)


def atomic_write(path: Path, text: str) -> None:
    """Write through a temporary file so an interrupted run never leaves half a file."""
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


# --- traces -------------------------------------------------------------------


def trace_csv(provenance: dict[str, Any], times, m11) -> str:
    lines = [f"# {TRACE_MAGIC}"]
    for key, value in provenance.items():
        text = fmt(value)
        if "\n" in text:
            raise ValueError(f"provenance value for {key!r} spans lines")
        lines.append(f"# {key}={text}")
    lines.append("t,m11")
    lines.extend(f"{fmt(float(t))},{fmt(float(m))}" for t, m in zip(times, m11))
    return "\n".join(lines) + "\n"


def trace_json(provenance: dict[str, Any], times, m11) -> str:
    record = {
        "format": TRACE_MAGIC,
        "provenance": {k: fmt(v) for k, v in provenance.items()},
        "t": [float(t) for t in times],
        "m11": [float(m) for m in m11],
    }
    return json.dumps(record, indent=1) + "\n"


def read_trace(path) -> tuple[dict[str, str], np.ndarray, np.ndarray]:
    """Return (provenance, times, m11) from a CSV or JSON trace file."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        rec = json.loads(text)
        if rec.get("format") != TRACE_MAGIC:
            raise ProvenanceError(f"{path}: not a trace file")
        return dict(rec["provenance"]), np.array(rec["t"], dtype=float), np.array(rec["m11"], dtype=float)
    prov: dict[str, str] = {}
    lines = text.splitlines()
    if not lines or lines[0] != f"# {TRACE_MAGIC}":
        raise ProvenanceError(f"{path}: missing trace header line")
    k = 1
    while k < len(lines) and lines[k].startswith("# "):
        key, sep, value = lines[k][2:].partition("=")
        if not sep:
            raise ProvenanceError(f"{path}: malformed header line {lines[k]!r}")
        prov[key] = value
        k += 1
    if k >= len(lines) or lines[k] != "t,m11":
        raise ProvenanceError(f"{path}: missing t,m11 column header")
    rows = [ln.split(",") for ln in lines[k + 1:] if ln]
    t = np.array([float(r[0]) for r in rows], dtype=float)
    m = np.array([float(r[1]) for r in rows], dtype=float)
    return prov, t, m


# --- couplings ----------------------------------------------------------------


def coupling_text(J: CouplingMatrix) -> str:
    out = [
        f"# {COUPLING_MAGIC}",
        f"# n_spins={J.n_spins}",
        f"# kind={J.kind}",
        f"# seed={fmt(J.seed)}",
        f"# j0={fmt(J.j0)}",
    ]
    out.extend(" ".join(repr(float(x)) for x in row) for row in J.values)
    return "\n".join(out) + "\n"


def read_couplings(path) -> CouplingMatrix:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != f"# {COUPLING_MAGIC}":
        raise ProvenanceError(f"{path}: not a coupling file")
    head = dict(ln[2:].split("=", 1) for ln in lines[1:5])
    vals = np.array([[float(x) for x in ln.split()] for ln in lines[5:] if ln.strip()])
    seed = int(head["seed"]) if head.get("seed") else None
    return CouplingMatrix(int(head["n_spins"]), vals, head["kind"], seed, float(head["j0"]))


# --- summaries ----------------------------------------------------------------


def summary_csv(rows: Iterable[dict[str, Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for row in rows:
        w.writerow([fmt(row[c]) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def read_summary(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SUMMARY_COLUMNS:
            raise ProvenanceError(f"{path}: unexpected summary columns")
        return list(reader)


def parse_optional_float(text: str) -> Optional[float]:
    return float(text) if text not in ("", None) else None
