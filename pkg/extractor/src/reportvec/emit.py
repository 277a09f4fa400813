"""Emitting engine-readable covariate files.

Per subject: stable-sort reports by date (ties keep corpus order), keep
the most recent L, left-pad with exact-zero slots, then write the cohort
directory (manifest, outcomes table, HZCV covariate matrix). The binary
layout matches the engine's reader byte for byte; see the engine's
docs/formats.md for the reference.
"""

import logging
import struct
from pathlib import Path

import numpy as np

from .errors import ExtractError

log = logging.getLogger("reportvec")

MATRIX_MAGIC = b"HZCV"
MATRIX_VERSION = 1
OUTCOMES_HEADER = "subject_id,time_days,event"


def group_by_subject(records, vectors):
    """Ordered {subject_id: [(record, vector), ...]} in corpus order."""
    if len(records) != len(vectors):
        raise ExtractError("misaligned", f"{len(records)} records vs {len(vectors)} vectors")
    grouped: dict[str, list] = {}
    for r, v in zip(records, vectors):
        grouped.setdefault(r.subject_id, []).append((r, v))
    return grouped


def assemble(grouped, L: int, dimension: int):
    """(ids, (n, L, d) float32 tensor, (n, L) bool mask), most recent last."""
    if L < 1:
        raise ExtractError("bad_length", "sequence length must be >= 1")
    ids = list(grouped)
    X = np.zeros((len(ids), L, dimension), dtype=np.float32)
    present = np.zeros((len(ids), L), dtype=bool)
    for row, sid in enumerate(ids):
        pairs = sorted(grouped[sid], key=lambda rv: rv[0].report_date)  # stable
        pairs = pairs[-L:]
        start = L - len(pairs)
        for slot, (_, vec) in enumerate(pairs, start=start):
            X[row, slot] = vec
            present[row, slot] = True
    return ids, X, present


def subject_outcomes(grouped):
    """(times, events) aligned with the grouped subject order.

    Time runs from the most recent report to the outcome date. Subjects
    without outcome columns get a (0, 0) placeholder row; the engine will
    refuse such a file until real follow-up is filled in.
    """
    times = []
    events = []
    missing = 0
    for sid, pairs in grouped.items():
        last_date = max(r.report_date for r, _ in pairs)
        outcome = next(((r.outcome_date, r.event) for r, _ in pairs if r.outcome_date), None)
        if outcome is None:
            missing += 1
            times.append(0.0)
            events.append(0)
            continue
        outcome_date, event = outcome
        dt = (outcome_date - last_date).days
        if dt < 0:
            raise ExtractError("negative_time", f"subject {sid!r}: outcome precedes last report")
        times.append(float(dt))
        events.append(int(event))
    if missing:
        log.warning("%d of %d subjects lack outcome columns; wrote placeholder "
                    "(time 0, event 0) rows that need real follow-up before modeling",
                    missing, len(grouped))
    return times, events


def write_matrix(ids, X, present, path) -> None:
    n, L, d = X.shape
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<HIII", MATRIX_VERSION, n, L, d))
        for sid in ids:
            raw = str(sid).encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        fh.write(np.packbits(present.reshape(-1), bitorder="little").tobytes())
        fh.write(np.ascontiguousarray(X, dtype="<f4").tobytes())


def emit_covariates(records, vectors, L: int, out_dir) -> Path:
    """Write manifest + outcomes + matrix; returns the manifest path."""
    vectors = np.asarray(vectors, dtype=np.float32)
    grouped = group_by_subject(records, vectors)
    ids, X, present = assemble(grouped, L, vectors.shape[1])
    times, events = subject_outcomes(grouped)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_matrix(ids, X, present, out_dir / "covariates.hzcv")
    with open(out_dir / "outcomes.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(OUTCOMES_HEADER + "\n")
        for sid, t, e in zip(ids, times, events):
            fh.write(f"{sid},{float(t)!r},{int(e)}\n")
    manifest = out_dir / "manifest.txt"
    with open(manifest, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("version=1\n")
        fh.write("outcomes=outcomes.csv\n")
        fh.write("covariates=covariates.hzcv\n")
        fh.write(f"dimension={X.shape[2]}\n")
        fh.write(f"sequence_length={L}\n")
        fh.write("grid=daily\n")
    return manifest
