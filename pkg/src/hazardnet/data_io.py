"""Cohort file formats, sequence assembly, and the synthetic oracle generator.

Covariate matrices use the "HZCV" binary layout (docs/formats.md): magic,
version u16, n/L/d as u32, length-prefixed UTF-8 id table, a little-endian
presence bitmap (one bit per subject-slot, padded slots 0), then n*L*d
little-endian float32 values, subject-major then slot-major then feature.
Values are float32 on disk and float64 in memory; the generator quantizes to
float32 at creation so save/load round trips are bit-exact.

Outcomes are a comma-delimited table (subject_id,time_days,event) and the
manifest is a key=value text document tying the pieces together.
"""

from __future__ import annotations

import datetime
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Cohort, CovariateSequence, Subject, TimeGrid, _frozen, validate_cohort
from .errors import DataError

MATRIX_MAGIC = b"HZCV"
MATRIX_VERSION = 1
MANIFEST_VERSION = 1
OUTCOMES_HEADER = "subject_id,time_days,event"


@dataclass(frozen=True)
class CohortManifest:
    outcomes_path: Path
    covariates_path: Path
    dimension: int
    sequence_length: int
    grid: str = "daily"


@dataclass(frozen=True)
class SyntheticSpec:
    """Proportional-hazards generator settings; the ground truth is returned."""

    n: int
    dimension: int
    beta: np.ndarray
    baseline_rate: float
    censor_rate: float
    seed: int
    sequence_mode: str = "static"
    sequence_length: int = 3
    drift_noise: float = 1.0
    admin_censor_time: float | None = None

    def __post_init__(self):
        beta = _frozen(np.asarray(self.beta, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "beta", beta)
        if self.n < 2:
            raise DataError("bad_spec", "n must be >= 2")
        if self.dimension < 1 or beta.size != self.dimension:
            raise DataError("bad_spec", f"beta must have length d={self.dimension}")
        if self.baseline_rate <= 0 or self.censor_rate <= 0:
            raise DataError("bad_spec", "baseline and censoring rates must be positive")
        if self.sequence_mode not in ("static", "drifting"):
            raise DataError("bad_spec", f"unknown sequence mode {self.sequence_mode!r}")
        if self.sequence_length < 1:
            raise DataError("bad_spec", "sequence_length must be >= 1")


@dataclass(frozen=True)
class GroundTruth:
    beta: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", _frozen(np.asarray(self.beta, dtype=np.float64)))
        object.__setattr__(self, "psi", _frozen(np.asarray(self.psi, dtype=np.float64)))


def write_covariate_matrix(ids, sequences, path) -> None:
    """Emit the HZCV binary matrix for per-subject covariate sequences."""
    ids = list(ids)
    sequences = list(sequences)
    if not ids:
        raise DataError("empty_cohort", "cannot write a matrix with no subjects")
    if len(ids) != len(sequences):
        raise DataError("row_count_mismatch", f"{len(ids)} ids vs {len(sequences)} sequences")
    if len(set(ids)) != len(ids):
        raise DataError("duplicate_id", "subject ids must be unique")
    L = sequences[0].length
    d = sequences[0].dimension
    for sid, seq in zip(ids, sequences):
        if seq.length != L or seq.dimension != d:
            raise DataError("dimension_mismatch", f"subject {sid}: inconsistent sequence shape")
    mask = np.stack([seq.present_mask for seq in sequences])
    data = np.stack([seq.vectors for seq in sequences]).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<HIII", MATRIX_VERSION, len(ids), L, d))
        for sid in ids:
            raw = str(sid).encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        fh.write(np.packbits(mask.reshape(-1), bitorder="little").tobytes())
        fh.write(data.tobytes())


def _read_exact(fh, n: int, path) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DataError("corrupt_header", f"{path}: truncated covariate matrix")
    return buf


def read_covariate_matrix(path):
    """Read an HZCV file back into (ids, sequences)."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, path) != MATRIX_MAGIC:
            raise DataError("corrupt_header", f"{path}: not a covariate matrix file")
        version, n, L, d = struct.unpack("<HIII", _read_exact(fh, 14, path))
        if version != MATRIX_VERSION:
            raise DataError("unsupported_version", f"{path}: matrix version {version}")
        ids = []
        for _ in range(n):
            (size,) = struct.unpack("<H", _read_exact(fh, 2, path))
            ids.append(_read_exact(fh, size, path).decode("utf-8"))
        n_mask_bytes = (n * L + 7) // 8
        mask_bits = np.unpackbits(
            np.frombuffer(_read_exact(fh, n_mask_bytes, path), dtype=np.uint8),
            count=n * L,
            bitorder="little",
        )
        mask = mask_bits.astype(bool).reshape(n, L)
        raw = _read_exact(fh, 4 * n * L * d, path)
        data = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(n, L, d)
        if fh.read(1):
            raise DataError("corrupt_header", f"{path}: trailing bytes")
    sequences = [CovariateSequence(data[i], mask[i]) for i in range(n)]
    return ids, sequences


def write_outcomes(ids, times, events, path) -> None:
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(OUTCOMES_HEADER + "\n")
        for sid, t, e in zip(ids, times, events):
            fh.write(f"{sid},{float(t)!r},{int(e)}\n")


def read_outcomes(path):
    ids = []
    times = []
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != OUTCOMES_HEADER:
            raise DataError("corrupt_header", f"{path}: expected header {OUTCOMES_HEADER!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise DataError("corrupt_header", f"{path}:{lineno}: malformed row")
            sid, t, e = parts
            if e not in ("0", "1"):
                raise DataError("bad_event", f"{path}:{lineno}: event must be 0 or 1, got {e!r}")
            ids.append(sid)
            times.append(float(t))
            events.append(e == "1")
    return ids, np.array(times, dtype=np.float64), np.array(events, dtype=bool)


def write_manifest(manifest: CohortManifest, path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"version={MANIFEST_VERSION}\n")
        fh.write(f"outcomes={Path(manifest.outcomes_path).name}\n")
        fh.write(f"covariates={Path(manifest.covariates_path).name}\n")
        fh.write(f"dimension={manifest.dimension}\n")
        fh.write(f"sequence_length={manifest.sequence_length}\n")
        fh.write(f"grid={manifest.grid}\n")


def read_manifest(path) -> CohortManifest:
    path = Path(path)
    fields: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError("corrupt_header", f"{path}: malformed manifest line {line!r}")
            key, value = line.split("=", 1)
            fields[key.strip()] = value.strip()
    for key in ("version", "outcomes", "covariates", "dimension", "sequence_length"):
        if key not in fields:
            raise DataError("corrupt_header", f"{path}: manifest missing key {key!r}")
    if int(fields["version"]) != MANIFEST_VERSION:
        raise DataError("unsupported_version", f"{path}: manifest version {fields['version']}")
    base = path.parent
    return CohortManifest(
        outcomes_path=base / fields["outcomes"],
        covariates_path=base / fields["covariates"],
        dimension=int(fields["dimension"]),
        sequence_length=int(fields["sequence_length"]),
        grid=fields.get("grid", "daily"),
    )


def load_cohort(manifest) -> Cohort:
    """Load and fully validate a cohort from a manifest (object or path)."""
    if not isinstance(manifest, CohortManifest):
        manifest = read_manifest(manifest)
    for p in (manifest.outcomes_path, manifest.covariates_path):
        if not Path(p).exists():
            raise DataError("missing_file", f"{p}: referenced by manifest but absent")
    out_ids, times, events = read_outcomes(manifest.outcomes_path)
    mat_ids, sequences = read_covariate_matrix(manifest.covariates_path)
    if len(out_ids) != len(mat_ids):
        raise DataError(
            "row_count_mismatch",
            f"{len(out_ids)} outcome rows vs {len(mat_ids)} matrix subjects",
        )
    by_id = dict(zip(mat_ids, sequences))
    missing = [sid for sid in out_ids if sid not in by_id]
    if missing:
        raise DataError("missing_subject", f"no covariates for subject(s) {missing[:5]}")
    sample = sequences[0]
    if sample.dimension != manifest.dimension or sample.length != manifest.sequence_length:
        raise DataError(
            "dimension_mismatch",
            f"matrix is {sample.length}x{sample.dimension}, manifest says "
            f"{manifest.sequence_length}x{manifest.dimension}",
        )
    subjects = [
        Subject(sid, float(t), bool(e), by_id[sid]) for sid, t, e in zip(out_ids, times, events)
    ]
    cohort = Cohort.from_subjects(subjects)
    validate_cohort(cohort)
    return cohort


def save_cohort(cohort: Cohort, out_dir) -> Path:
    """Write outcomes, covariates, and manifest into out_dir; returns manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids = [s.id for s in cohort.subjects]
    write_outcomes(ids, cohort.times(), cohort.events(), out_dir / "outcomes.csv")
    write_covariate_matrix(ids, [s.covariates for s in cohort.subjects], out_dir / "covariates.hzcv")
    manifest = CohortManifest(
        outcomes_path=out_dir / "outcomes.csv",
        covariates_path=out_dir / "covariates.hzcv",
        dimension=cohort.dimension,
        sequence_length=cohort.sequence_length,
    )
    write_manifest(manifest, out_dir / "manifest.txt")
    return out_dir / "manifest.txt"


def assemble_sequence(reports, length: int) -> CovariateSequence:
    """Keep the `length` most recent dated vectors, oldest first, zero-padded.

    Reports are (date, vector) pairs; date ties keep input order (stable sort).
    """
    reports = list(reports)
    if not reports:
        raise DataError("no_reports", "subject has no reports")
    order = sorted(range(len(reports)), key=lambda k: reports[k][0])
    kept = order[-length:]
    d = np.asarray(reports[kept[0]][1], dtype=np.float64).size
    vectors = np.zeros((length, d))
    mask = np.zeros(length, dtype=bool)
    offset = length - len(kept)
    for slot, k in enumerate(kept):
        vec = np.asarray(reports[k][1], dtype=np.float64).reshape(-1)
        if vec.size != d:
            raise DataError("dimension_mismatch", "reports disagree on vector dimension")
        vectors[offset + slot] = vec
        mask[offset + slot] = True
    return CovariateSequence(vectors, mask)


def assemble_sequences(reports_by_subject: dict, length: int) -> dict[str, CovariateSequence]:
    """assemble_sequence for every subject in a {id: [(date, vector), ...]} map."""
    return {sid: assemble_sequence(reports, length) for sid, reports in reports_by_subject.items()}


def _as_date(value) -> datetime.date:
    if isinstance(value, datetime.datetime):
        return value.date()
    if isinstance(value, datetime.date):
        return value
    if isinstance(value, str):
        return datetime.date.fromisoformat(value)
    raise DataError("bad_date", f"not a calendar date: {value!r}")


def time_to_event(most_recent_report_date, end_date) -> int:
    """Whole days from the most recent report to death or last follow-up."""
    delta = (_as_date(end_date) - _as_date(most_recent_report_date)).days
    if delta < 0:
        raise DataError("negative_time", f"end date precedes report date by {-delta} day(s)")
    return delta


def times_from_dates(ids, report_dates, end_dates, events):
    """time_to_event per subject, excluding negative spans with a warning."""
    kept_ids = []
    kept_times = []
    kept_events = []
    for sid, rd, ed, ev in zip(ids, report_dates, end_dates, events):
        try:
            t = time_to_event(rd, ed)
        except DataError as exc:
            if exc.code != "negative_time":
                raise
            warnings.warn(f"excluding subject {sid}: {exc}", RuntimeWarning, stacklevel=2)
            continue
        kept_ids.append(sid)
        kept_times.append(float(t))
        kept_events.append(bool(ev))
    return kept_ids, np.array(kept_times, dtype=np.float64), np.array(kept_events, dtype=bool)


def _quantize(x: np.ndarray) -> np.ndarray:
    """Round-trip through float32 so in-memory values match on-disk storage."""
    return x.astype(np.float32).astype(np.float64)


def synthesize_cohort(spec: SyntheticSpec):
    """Proportional-hazards cohort with known ground truth.

    Event times are Exponential(baseline_rate * exp(beta . x_recent)), censor
    times Exponential(censor_rate); the observed time is the minimum. Static
    mode repeats x_recent in every slot; drifting mode stores progressively
    noisier copies in older slots, so only sequence order reveals which slot
    is the clean one. Returns (Cohort, GroundTruth).
    """
    rng = np.random.default_rng([spec.seed])
    n, d, L = spec.n, spec.dimension, spec.sequence_length
    x_recent = _quantize(rng.standard_normal((n, d)))
    psi = x_recent @ spec.beta
    event_time = rng.exponential(1.0 / (spec.baseline_rate * np.exp(psi)))
    censor_time = rng.exponential(1.0 / spec.censor_rate, size=n)
    if spec.admin_censor_time is not None:
        censor_time = np.minimum(censor_time, spec.admin_censor_time)
    z = np.minimum(event_time, censor_time)
    event = event_time <= censor_time
    X = np.empty((n, L, d))
    X[:, L - 1, :] = x_recent
    for l in range(L - 1):
        if spec.sequence_mode == "static":
            X[:, l, :] = x_recent
        else:
            scale = spec.drift_noise * (L - 1 - l) / max(L - 1, 1)
            X[:, l, :] = _quantize(x_recent + scale * rng.standard_normal((n, d)))
    mask = np.ones((n, L), dtype=bool)
    subjects = [
        Subject(f"s{i:05d}", float(z[i]), bool(event[i]), CovariateSequence(X[i], mask[i]))
        for i in range(n)
    ]
    grid = TimeGrid.daily(float(z.max()))
    cohort = Cohort.from_subjects(subjects, grid)
    return cohort, GroundTruth(spec.beta, psi)


def write_ground_truth(ids, truth: GroundTruth, path) -> None:
    """Sidecar with the generator's true beta and per-subject true log-risk."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("beta," + ",".join(repr(float(b)) for b in truth.beta) + "\n")
        fh.write("subject_id,true_psi\n")
        for sid, p in zip(ids, truth.psi):
            fh.write(f"{sid},{float(p)!r}\n")


def read_ground_truth(path):
    """Parse a ground-truth sidecar; returns (ids, GroundTruth)."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("beta,"):
            raise DataError("corrupt_header", f"{path}: missing beta line")
        beta = np.array([float(v) for v in first.split(",")[1:]])
        header = fh.readline().strip()
        if header != "subject_id,true_psi":
            raise DataError("corrupt_header", f"{path}: missing true_psi header")
        ids = []
        psi = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            sid, value = line.split(",")
            ids.append(sid)
            psi.append(float(value))
    return ids, GroundTruth(beta, np.array(psi))
