"""Line-delimited JSON snapshot files and estimate artifacts.

A snapshot file starts with a header line ``{"n": N}`` followed by one
record per snapshot::

    {"observed": [0, 2, 3], "y": [[re, im], [re, im], [re, im]]}

Indices are 0-based and strictly increasing.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .scene import SelectionPattern, SnapshotSet

__all__ = ("SnapshotFileError", "read_snapshots", "write_snapshots", "write_estimate", "read_estimate")


class SnapshotFileError(ValueError):
    pass


def _pairs(z) -> list[list[float]]:
    z = np.asarray(z, dtype=complex).ravel()
    return [[float(v.real), float(v.imag)] for v in z]


def write_snapshots(path, data: SnapshotSet) -> None:
    lines = [json.dumps({"n": data.n})]
    for pattern, y in data.records():
        lines.append(json.dumps({"observed": list(pattern.observed), "y": _pairs(y)}))
    Path(path).write_text("\n".join(lines) + "\n")


def read_snapshots(path) -> SnapshotSet:
    text = Path(path).read_text().splitlines()
    lines = [(i + 1, ln) for i, ln in enumerate(text) if ln.strip()]
    if not lines:
        raise SnapshotFileError(f"{path}: empty file")
    lineno, head = lines[0]
    try:
        n = json.loads(head)["n"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise SnapshotFileError(f"{path}, line {lineno}: header must be {{\"n\": N}} ({exc})") from None
    if not isinstance(n, int) or n < 1:
        raise SnapshotFileError(f"{path}, line {lineno}: n must be a positive integer, got {n!r}")
    records = []
    for idx, (lineno, line) in enumerate(lines[1:]):
        where = f"{path}, line {lineno} (record {idx})"
        try:
            rec = json.loads(line)
            obs = rec["observed"]
            y = np.array([complex(re, im) for re, im in rec["y"]], dtype=complex)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise SnapshotFileError(f"{where}: malformed record ({exc})") from None
        try:
            pattern = SelectionPattern(tuple(obs), n)
        except (ValueError, TypeError) as exc:
            raise SnapshotFileError(f"{where}: {exc}") from None
        if y.size != len(pattern):
            raise SnapshotFileError(
                f"{where}: y has {y.size} entries but {len(pattern)} indices are observed"
            )
        records.append((pattern, y))
    if not records:
        raise SnapshotFileError(f"{path}: no snapshot records")
    return SnapshotSet.from_records(n, records)


def write_estimate(path, estimate, likelihood_trace, iterations, termination, constraint="") -> None:
    estimate = np.asarray(estimate, dtype=complex)
    doc = {
        "n": int(estimate.shape[0]),
        "constraint": str(constraint),
        "estimate": _pairs(estimate),
        "likelihood_trace": [float(p) for p in likelihood_trace],
        "iterations": int(iterations),
        "termination": termination,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_estimate(path) -> dict:
    doc = json.loads(Path(path).read_text())
    n = doc["n"]
    doc["estimate"] = np.array([complex(a, b) for a, b in doc["estimate"]]).reshape(n, n)
    return doc
