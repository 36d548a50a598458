"""Persistence of trajectory records, histograms and run summaries.

Record text format: a CSV file with header ``t,energy,L,eps,r,flags`` and
floats printed with 17 significant digits (exact round trip), plus a JSON
sidecar ``<name>.meta.json`` holding status, orbit count, ionisation time,
events and metadata.

Record binary format (little endian)::

    8 bytes   magic  b"SEDREC1\\0"
    4 bytes   uint32 header length H
    H bytes   UTF-8 JSON header (same keys as the sidecar, plus "rows")
    rows*48   float64 row-major table (t, energy, L, eps, r, flags)
"""
from __future__ import annotations

import csv
import io
import json
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .conjecture import HistogramReport
from .record import COLUMNS, TrajectoryRecord

MAGIC = b"SEDREC1\x00"
PathLike = Union[str, Path]


def _header(record: TrajectoryRecord) -> dict:
    return {"columns": list(COLUMNS), "status": record.status,
            "ionisation_time": record.ionisation_time, "orbits": record.orbits,
            "events": record.events, "meta": record.meta}


def _from_header(table: np.ndarray, h: dict) -> TrajectoryRecord:
    return TrajectoryRecord.from_table(table, events=h["events"], status=h["status"],
                                       ionisation_time=h["ionisation_time"], orbits=h["orbits"],
                                       meta=h["meta"])


def sidecar_path(path: PathLike) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".meta.json")


def write_record_csv(record: TrajectoryRecord, path: PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for row in record.table():
            w.writerow([format(x, ".17g") for x in row[:5]] + [str(int(row[5]))])
    sidecar_path(path).write_text(json.dumps(_header(record), indent=1))


def read_record_csv(path: PathLike) -> TrajectoryRecord:
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
        if tuple(header) != COLUMNS:
            raise ValueError(f"{path}: unexpected columns {header}")
        body = fh.read()
    table = (np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2).reshape(-1, 6)
             if body.strip() else np.zeros((0, 6)))
    return _from_header(table, json.loads(sidecar_path(path).read_text()))


def write_record_binary(record: TrajectoryRecord, path: PathLike) -> None:
    table = np.ascontiguousarray(record.table(), dtype="<f8")
    header = json.dumps({**_header(record), "rows": len(table)}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(table.tobytes())


def read_record_binary(path: PathLike) -> TrajectoryRecord:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a trajectory record")
    (n,) = struct.unpack("<I", data[8:12])
    h = json.loads(data[12:12 + n].decode("utf-8"))
    table = np.frombuffer(data[12 + n:], dtype="<f8").reshape(h["rows"], 6).astype(np.float64)
    return _from_header(table, h)


def write_record(record: TrajectoryRecord, path: PathLike, fmt: str = "csv") -> Path:
    path = Path(path)
    if fmt == "csv":
        write_record_csv(record, path)
    elif fmt == "binary":
        write_record_binary(record, path)
    else:
        raise ValueError(f"unknown record format {fmt!r}")
    return path


def read_record(path: PathLike) -> TrajectoryRecord:
    with open(path, "rb") as fh:
        head = fh.read(8)
    return read_record_binary(path) if head == MAGIC else read_record_csv(path)


def write_histogram(report: HistogramReport, path: PathLike) -> None:
    """Columns: bin edges, center, normalized height and the target pdf at the center."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["left", "right", "center", "height", "pdf"])
        for a, b, c, hgt, p in zip(report.edges[:-1], report.edges[1:], report.centers,
                                   report.heights, report.pdf_values):
            w.writerow([format(x, ".17g") for x in (a, b, c, hgt, p)])


def read_histogram(path: PathLike) -> dict:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return dict(zip(["left", "right", "center", "height", "pdf"], data.T))


def write_json(obj, path: PathLike) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, default=float))
