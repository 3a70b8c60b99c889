"""Deterministic writers for JSON reports, CSV tables and P6 rasters.

JSON is written with sorted keys and ``repr``-exact floats; nothing
time- or host-dependent goes into any file, so identical inputs give
byte-identical outputs.
"""
from __future__ import annotations

import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


def _default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "to_json"):
        return obj.to_json()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_default, allow_nan=True) + "\n"


def report(kind: str, config: dict, body: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, "kind": kind, "config": config, **body}


def write_text(path: str | Path | None, text: str, stream=None) -> None:
    if path is None or str(path) == "-":
        (stream or sys.stdout).write(text)
        return
    Path(path).write_text(text)


def write_json(path, obj, stream=None) -> None:
    write_text(path, dumps(obj), stream)


def csv_text(columns, rows, config: dict | None = None, notes=()) -> str:
    """CSV with an optional leading ``# config: {...}`` comment line and
    trailing ``# ...`` note lines (used for truncation warnings)."""
    buf = io.StringIO()
    if config is not None:
        buf.write("# config: " + json.dumps(config, sort_keys=True, default=_default) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(row)
    for note in notes:
        buf.write(f"# {note}\n")
    return buf.getvalue()


def read_csv_config(text: str) -> dict | None:
    first = text.splitlines()[0] if text else ""
    prefix = "# config: "
    return json.loads(first[len(prefix):]) if first.startswith(prefix) else None


def ppm_bytes(rgb: np.ndarray) -> bytes:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("expected an (height, width, 3) array")
    height, width, _ = rgb.shape
    return f"P6\n{width} {height}\n255\n".encode("ascii") + rgb.tobytes()


def read_ppm(data: bytes) -> np.ndarray:
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    width, height = (int(v) for v in parts[1].split())
    if int(parts[2]) != 255:
        raise ValueError("only 8-bit PPM is supported")
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(height, width, 3)


def write_raster(path, raster, config: dict) -> Path:
    """Write ``path`` (P6) and ``path.json`` (window, parameters, counts,
    config echo). Returns the sidecar path."""
    path = Path(path)
    path.write_bytes(ppm_bytes(raster.to_rgb()))
    sidecar = path.with_name(path.name + ".json")
    write_json(sidecar, report("julia", config, raster.sidecar()))
    return sidecar
