"""Binary grid dumps and delimited text tables.

A grid dump is a pair of files: <stem>.grid holds little-endian float64
(re, im) pairs in row-major order, <stem>.json is a structured-text
header (kind, L, n, seed, partition reference, extra metadata).  Tables
are comma-delimited text with a single header row naming columns.
"""
from __future__ import annotations

import json
import os

import numpy as np

GRID_FORMAT = "qclab-grid-v1"


def save_grid(stem, values, L, kind, seed=None, partition_ref=None, extra=None):
    """Write <stem>.grid (binary) and <stem>.json (header)."""
    values = np.asarray(values, dtype=complex)
    n = values.shape[0]
    if values.shape != (n, n):
        raise ValueError("grid must be square")
    raw = np.empty((n, n, 2), dtype="<f8")
    raw[:, :, 0] = values.real
    raw[:, :, 1] = values.imag
    with open(str(stem) + ".grid", "wb") as fh:
        fh.write(raw.tobytes(order="C"))
    header = {
        "format": GRID_FORMAT,
        "kind": kind,
        "L": float(L),
        "n": int(n),
        "seed": seed,
        "partition": partition_ref,
        "extra": extra or {},
    }
    with open(str(stem) + ".json", "w") as fh:
        json.dump(header, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_grid(stem):
    """Read a grid dump; returns (values, header)."""
    with open(str(stem) + ".json") as fh:
        header = json.load(fh)
    if header.get("format") != GRID_FORMAT:
        raise ValueError("not a grid dump header")
    n = int(header["n"])
    raw = np.fromfile(str(stem) + ".grid", dtype="<f8")
    if raw.size != 2 * n * n:
        raise ValueError("grid payload size mismatch")
    raw = raw.reshape(n, n, 2)
    return raw[:, :, 0] + 1j * raw[:, :, 1], header


def save_table(path, columns, rows, fmt="%.12g"):
    """Comma-delimited table with a header row; deterministic formatting."""
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            cells = []
            for v in row:
                if isinstance(v, (int, np.integer)):
                    cells.append(str(int(v)))
                elif isinstance(v, (float, np.floating)):
                    cells.append(fmt % v)
                else:
                    cells.append(str(v))
            fh.write(",".join(cells) + "\n")


def load_table(path):
    """Read a delimited table; returns (columns, list of string rows)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    columns = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    return columns, rows


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
