"""
CSV outputs with a JSON metadata sidecar, and the spectrum CSV reader.

Every CSV ``name.csv`` gets ``name.json`` next to it carrying the parameter
hash, the tolerances in force and library versions.
"""

from __future__ import annotations

import csv
import json
import platform
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import scipy

from . import __version__
from .reduced_qubit import SpectrumScan

__all__ = [
    "SPECTRUM_COLUMNS",
    "write_csv",
    "write_sidecar",
    "sidecar_path",
    "spectrum_rows",
    "write_spectrum_csv",
    "read_spectrum_csv",
]

SPECTRUM_COLUMNS = ("pump_amp", "omega_s", "P1", "branch", "r", "delta_r_tilde",
                    "omega10_stark", "ok", "error")


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def versions() -> dict:
    return {
        "kerrprobe": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def write_sidecar(csv_path, param_hash: Optional[str], tolerances: Optional[Mapping] = None,
                  extra: Optional[Mapping] = None) -> Path:
    meta = {
        "file": Path(csv_path).name,
        "param_hash": param_hash,
        "tolerances": dict(tolerances or {}),
        "versions": versions(),
        "units": "angular frequencies in rad/s",
    }
    if extra:
        meta.update(extra)
    out = sidecar_path(csv_path)
    out.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    return out


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], param_hash: Optional[str] = None,
              tolerances: Optional[Mapping] = None, extra: Optional[Mapping] = None) -> Path:
    """Write ``rows`` under ``header`` and the matching sidecar; returns the CSV path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    write_sidecar(path, param_hash, tolerances, extra)
    return path


def spectrum_rows(scan: SpectrumScan):
    for i, amp in enumerate(scan.pump_amps):
        for j, ws in enumerate(scan.omega_s):
            yield (amp, ws, scan.P1[i, j], scan.branch[i], scan.r[i], scan.delta_r_tilde[i],
                   scan.omega10_ddd[i], bool(scan.ok[i]), scan.errors[i])


def write_spectrum_csv(path, scan: SpectrumScan, param_hash: Optional[str] = None,
                       tolerances: Optional[Mapping] = None) -> Path:
    extra = {"omega_p": scan.omega_p, "kappa": scan.kappa}
    return write_csv(path, SPECTRUM_COLUMNS, spectrum_rows(scan), param_hash, tolerances, extra)


def read_spectrum_csv(path) -> SpectrumScan:
    """Rebuild a :class:`SpectrumScan` from a spectrum CSV (and its sidecar, if present)."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} holds no data rows")
    missing = set(SPECTRUM_COLUMNS[:7]) - set(rows[0])
    if missing:
        raise ValueError(f"{path} lacks columns {sorted(missing)}")
    amps = list(dict.fromkeys(float(r["pump_amp"]) for r in rows))
    ws = list(dict.fromkeys(float(r["omega_s"]) for r in rows))
    if len(amps) * len(ws) != len(rows):
        raise ValueError(f"{path} is not a full pump_amp x omega_s grid")
    ia = {a: i for i, a in enumerate(amps)}
    iw = {w: j for j, w in enumerate(ws)}
    P = np.full((len(amps), len(ws)), np.nan)
    first = {}
    for r in rows:
        i = ia[float(r["pump_amp"])]
        P[i, iw[float(r["omega_s"])]] = float(r["P1"])
        first.setdefault(i, r)
    meta = [first[i] for i in range(len(amps))]
    omega_p = kappa = float("nan")
    side = sidecar_path(path)
    if side.exists():
        info = json.loads(side.read_text())
        omega_p = float(info.get("omega_p", omega_p))
        kappa = float(info.get("kappa", kappa))
    return SpectrumScan(
        pump_amps=np.array(amps),
        omega_s=np.array(ws),
        P1=P,
        branch=[m["branch"] for m in meta],
        r=np.array([float(m["r"]) for m in meta]),
        delta_r_tilde=np.array([float(m["delta_r_tilde"]) for m in meta]),
        omega10_ddd=np.array([float(m["omega10_stark"]) for m in meta]),
        ok=np.array([bool(int(m.get("ok", 1) or 1)) for m in meta]),
        errors=[m.get("error", "") or "" for m in meta],
        omega_p=omega_p,
        kappa=kappa,
    )
