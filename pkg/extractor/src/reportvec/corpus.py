"""Reading the report corpus.

The corpus is a csv file with columns subject_id, report_date, text
(standard csv quoting, so texts may contain commas and newlines). Two
optional columns, outcome_date and event, let the corpus carry follow-up
information; when present they must agree across a subject's rows.
"""

import csv
from dataclasses import dataclass
from datetime import date

from .errors import ExtractError

REQUIRED = ("subject_id", "report_date", "text")


@dataclass(frozen=True)
class ReportRecord:
    subject_id: str
    report_date: date
    text: str
    outcome_date: date | None = None
    event: bool | None = None


def _parse_date(raw: str, where: str) -> date:
    try:
        return date.fromisoformat(raw.strip())
    except ValueError:
        raise ExtractError("bad_date", f"{where}: unparseable date {raw!r}") from None


def read_corpus(path) -> list[ReportRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or any(c not in reader.fieldnames for c in REQUIRED):
            raise ExtractError(
                "corrupt_header",
                f"{path}: corpus needs columns {', '.join(REQUIRED)}",
            )
        has_outcome = "outcome_date" in reader.fieldnames and "event" in reader.fieldnames
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            sid = (row["subject_id"] or "").strip()
            text = row["text"] or ""
            if not sid:
                raise ExtractError("bad_record", f"{where}: empty subject_id")
            if not text.strip():
                raise ExtractError("bad_record", f"{where}: empty report text")
            outcome_date = None
            event = None
            if has_outcome and (row["outcome_date"] or "").strip():
                outcome_date = _parse_date(row["outcome_date"], where)
                raw_event = (row["event"] or "").strip()
                if raw_event not in ("0", "1"):
                    raise ExtractError("bad_record", f"{where}: event must be 0 or 1, got {raw_event!r}")
                event = raw_event == "1"
            records.append(ReportRecord(sid, _parse_date(row["report_date"], where), text,
                                        outcome_date, event))
    if not records:
        raise ExtractError("empty_corpus", f"{path}: no report rows")
    _check_outcome_consistency(records)
    return records


def _check_outcome_consistency(records) -> None:
    seen: dict[str, tuple] = {}
    for r in records:
        if r.outcome_date is None:
            continue
        key = (r.outcome_date, r.event)
        if seen.setdefault(r.subject_id, key) != key:
            raise ExtractError(
                "conflicting_outcome",
                f"subject {r.subject_id!r} has inconsistent outcome rows",
            )
