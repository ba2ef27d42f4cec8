"""CSV/JSON persistence for every artifact the toolkit produces.

Writers are deterministic: JSON keys are sorted, floats use ``repr`` and rows
are emitted in a fixed order, so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .montecarlo import FailureCurve, MttueEstimate
from .profiler import HammerGrid, RdtMatrix
from .svard import ThresholdMap


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None  # strict JSON has no NaN/inf
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else v for v in row])
    return path


def read_csv(path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- profiler -----------------------------------------------------------------

def write_rdt_matrix(matrix: RdtMatrix, csv_path, sidecar_path) -> None:
    """Long-format CSV (row_id, iteration, measured_rdt) plus a JSON flip-log sidecar."""
    n, iters = matrix.values.shape
    write_csv(csv_path, ("row_id", "iteration", "measured_rdt"),
              ((matrix.rows[i], t, int(matrix.values[i, t])) for i in range(n) for t in range(iters)))
    nz = np.argwhere(matrix.flip_masks != 0)
    sidecar = {
        "grid": [matrix.grid.start, matrix.grid.stop, matrix.grid.step],
        "rows": matrix.rows,
        "iterations": iters,
        "row_cells": matrix.row_cells,
        "flip_masks": [[int(i), int(t), int(matrix.flip_masks[i, t])] for i, t in nz],
    }
    write_json(sidecar_path, sidecar)


def read_rdt_matrix(csv_path, sidecar_path) -> RdtMatrix:
    side = read_json(sidecar_path)
    rows = [int(r) for r in side["rows"]]
    pos = {r: i for i, r in enumerate(rows)}
    iters = int(side["iterations"])
    values = np.empty((len(rows), iters), dtype=np.int64)
    for rec in read_csv(csv_path):
        values[pos[int(rec["row_id"])], int(rec["iteration"])] = int(rec["measured_rdt"])
    masks = np.zeros((len(rows), iters), dtype=np.uint64)
    for i, t, m in side["flip_masks"]:
        masks[i, t] = m
    return RdtMatrix(rows, HammerGrid(*side["grid"]), values, masks, [list(c) for c in side["row_cells"]])


# -- svard ------------------------------------------------------------------

def write_threshold_map(tmap: ThresholdMap, path) -> Path:
    return write_csv(path, ("row", "threshold", "bin", "demotions"),
                     ((r, tmap.thresholds[r], tmap.bins[r], tmap.demotions.get(r, 0)) for r in sorted(tmap.thresholds)))


def read_threshold_map(path, guarded: int, relaxed: int, policy: str) -> ThresholdMap:
    recs = read_csv(path)
    return ThresholdMap(
        {int(r["row"]): int(r["threshold"]) for r in recs},
        {int(r["row"]): r["bin"] for r in recs},
        guarded, relaxed, policy,
        {int(r["row"]): int(r["demotions"]) for r in recs if int(r["demotions"])},
    )


# -- montecarlo ---------------------------------------------------------------

def curve_rows(curve: FailureCurve, label: str | None = None):
    for e, p in zip(curve.epochs.tolist(), curve.p_fail.tolist()):
        yield (e, repr(float(p))) if label is None else (e, repr(float(p)), label)


def write_failure_curve(curve: FailureCurve, path) -> Path:
    return write_csv(path, ("epoch", "p_fail"), curve_rows(curve))


def read_failure_curve(path) -> tuple[np.ndarray, np.ndarray]:
    recs = read_csv(path)
    return (np.array([int(r["epoch"]) for r in recs], dtype=np.int64),
            np.array([float(r["p_fail"]) for r in recs]))


def write_events(path, events) -> Path:
    """Uncorrectable-error log: iterable of (trial, epoch, codeword)."""
    return write_csv(path, ("trial", "epoch", "codeword"), events)


def estimate_to_json(est: MttueEstimate | None) -> dict:
    if est is None:
        return {"status": "insufficient-failures"}
    d = est.to_dict()
    d["status"] = "ok"
    return d
