"""CSV + JSON sidecar serialization of response records."""

from __future__ import annotations

import json
import math
import os
from pathlib import Path

import numpy as np

from .dynamics import ResponseRecord
from .errors import DataError, EmptyFile, MissingSampleRate, RaggedRows


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def atomic_write_text(path, text: str) -> None:
    """Write to a temporary sibling, then rename over ``path``."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def record_to_csv_text(record: ResponseRecord) -> str:
    lines = [",".join(record.channel_labels)]
    lines.extend(",".join(repr(float(v)) for v in row) for row in record.samples)
    return "\n".join(lines) + "\n"


def write_record_csv(record: ResponseRecord, path) -> tuple[Path, Path]:
    """Write ``path`` (header = labels, one row per sample) and its JSON sidecar."""
    path = Path(path)
    atomic_write_text(path, record_to_csv_text(record))
    meta = {"sample_rate": record.sample_rate, "units": record.units,
            "quantity": record.quantity, "seed": record.seed}
    side = sidecar_path(path)
    atomic_write_text(side, json.dumps(meta, indent=2))
    return path, side


def ingest_csv(path, sample_rate: float | None = None) -> ResponseRecord:
    """Parse a record written by :func:`write_record_csv`.

    ``sample_rate`` is required when the sidecar is absent and overrides it
    otherwise. Rows with a non-numeric or non-finite cell are rejected with
    their line number.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
    fs = sample_rate if sample_rate is not None else meta.get("sample_rate")
    if fs is None:
        raise MissingSampleRate(f"{path}: no sidecar {side.name} and no sample rate given")

    lines = path.read_text().splitlines()
    if not lines or not lines[0].strip():
        raise EmptyFile(f"{path} is empty")
    labels = [c.strip() for c in lines[0].split(",")]
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(labels):
            raise RaggedRows(f"{path}:{lineno}: expected {len(labels)} fields, got {len(cells)}")
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            raise RaggedRows(f"{path}:{lineno}: non-numeric field") from None
        if not all(math.isfinite(v) for v in vals):
            raise RaggedRows(f"{path}:{lineno}: non-finite field")
        rows.append(vals)
    if not rows:
        raise EmptyFile(f"{path} has a header but no samples")
    if len(rows) < 2:
        raise DataError(f"{path}: a record needs at least 2 samples")
    return ResponseRecord(np.array(rows), float(fs), labels,
                          meta.get("quantity", "acceleration"), meta.get("units", "m/s^2"),
                          meta.get("seed"))
