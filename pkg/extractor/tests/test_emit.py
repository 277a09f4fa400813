import datetime
import struct
import warnings

import numpy as np
import pytest

from conftest import OUTCOME_FIELDS, clinical_rows, write_corpus
from reportvec import ExtractError, ExtractionConfig, ReportRecord, extract_hidden, read_corpus
from reportvec.emit import assemble, emit_covariates, group_by_subject, subject_outcomes


def report(sid, day, text="stable", outcome=None, event=None):
    return ReportRecord(sid, datetime.date(2020, 1, day), text, outcome, event)


def test_single_report_left_pads_with_exact_zeros(tmp_path):
    records = [report("p1", 5, outcome=datetime.date(2020, 2, 1), event=True)]
    vectors = np.array([[1.5, -2.25]], dtype=np.float32)
    manifest = emit_covariates(records, vectors, 3, tmp_path)

    blob = (tmp_path / "covariates.hzcv").read_bytes()
    assert blob[:4] == b"HZCV"
    version, n, L, d = struct.unpack("<HIII", blob[4:18])
    assert (version, n, L, d) == (1, 1, 3, 2)
    (id_len,) = struct.unpack("<H", blob[18:20])
    assert blob[20:20 + id_len] == b"p1"
    # one subject, three slots: only the newest slot is present, so the
    # bitmap byte has just bit 2 set in little order
    assert blob[22] == 4

    from hazardnet import read_covariate_matrix
    ids, sequences = read_covariate_matrix(tmp_path / "covariates.hzcv")
    assert ids == ["p1"]
    seq = sequences[0]
    assert seq.present_mask.tolist() == [False, False, True]
    assert not seq.vectors[0].any()
    assert not seq.vectors[1].any()
    assert seq.vectors[2].tolist() == [1.5, -2.25]
    assert manifest.name == "manifest.txt"


def test_keeps_most_recent_reports_oldest_first():
    records = [report("p1", day) for day in (9, 3, 27, 15)]
    vectors = np.array([[9.0], [3.0], [27.0], [15.0]], dtype=np.float32)
    grouped = group_by_subject(records, vectors)
    ids, X, present = assemble(grouped, 2, 1)
    assert ids == ["p1"]
    assert present[0].tolist() == [True, True]
    assert X[0, :, 0].tolist() == [15.0, 27.0]


def test_date_ties_keep_corpus_order():
    records = [report("p1", 5), report("p1", 5), report("p1", 5)]
    vectors = np.array([[1.0], [2.0], [3.0]], dtype=np.float32)
    ids, X, present = assemble(group_by_subject(records, vectors), 2, 1)
    assert X[0, :, 0].tolist() == [2.0, 3.0]


def test_subject_order_is_first_appearance():
    records = [report("b", 1), report("a", 2), report("b", 3)]
    vectors = np.zeros((3, 1), dtype=np.float32) + 1
    grouped = group_by_subject(records, vectors)
    assert list(grouped) == ["b", "a"]


def test_misaligned_inputs_rejected():
    with pytest.raises(ExtractError) as err:
        group_by_subject([report("p1", 1)], np.zeros((2, 4), dtype=np.float32))
    assert err.value.code == "misaligned"

    with pytest.raises(ExtractError) as err:
        assemble(group_by_subject([report("p1", 1)], np.ones((1, 4), dtype=np.float32)), 0, 4)
    assert err.value.code == "bad_length"


def test_outcome_times_count_from_most_recent_report():
    june = datetime.date(2020, 6, 1)
    records = [
        report("p1", 5, outcome=june, event=True),
        report("p1", 20, outcome=june, event=True),
        report("p2", 10, outcome=datetime.date(2020, 1, 10), event=False),
    ]
    vectors = np.ones((3, 2), dtype=np.float32)
    times, events = subject_outcomes(group_by_subject(records, vectors))
    assert times == [(june - datetime.date(2020, 1, 20)).days, 0.0]
    assert events == [1, 0]


def test_outcome_before_last_report_rejected():
    records = [
        report("p1", 20),
        report("p1", 25, outcome=datetime.date(2020, 1, 22), event=True),
    ]
    vectors = np.ones((2, 2), dtype=np.float32)
    with pytest.raises(ExtractError) as err:
        subject_outcomes(group_by_subject(records, vectors))
    assert err.value.code == "negative_time"


def test_missing_outcomes_become_placeholders_with_warning(tmp_path, caplog):
    records = [report("p1", 5), report("p2", 6)]
    vectors = np.ones((2, 2), dtype=np.float32)
    with caplog.at_level("WARNING", logger="reportvec"):
        emit_covariates(records, vectors, 1, tmp_path)
    assert any("2 of 2 subjects lack outcome" in m for m in caplog.messages)
    lines = (tmp_path / "outcomes.csv").read_text().splitlines()
    assert lines == ["subject_id,time_days,event", "p1,0.0,0", "p2,0.0,0"]


def test_outcomes_file_plain_csv(tmp_path):
    records = [report("p1", 1, outcome=datetime.date(2020, 4, 24), event=True),
               report("p2", 2, outcome=datetime.date(2021, 1, 2), event=False)]
    vectors = np.ones((2, 3), dtype=np.float32)
    emit_covariates(records, vectors, 1, tmp_path)
    lines = (tmp_path / "outcomes.csv").read_text().splitlines()
    assert lines == ["subject_id,time_days,event", "p1,114.0,1", "p2,366.0,0"]


def test_manifest_lists_every_artifact(tmp_path):
    records = [report("p1", 1, outcome=datetime.date(2020, 2, 1), event=True)]
    manifest = emit_covariates(records, np.ones((1, 4), dtype=np.float32), 2, tmp_path)
    text = manifest.read_text()
    for line in ("version=1", "outcomes=outcomes.csv", "covariates=covariates.hzcv",
                 "dimension=4", "sequence_length=2", "grid=daily"):
        assert line in text.splitlines()


def test_emitted_directory_loads_in_the_engine(tmp_path, checkpoint_a):
    """End to end: corpus -> vectors -> files -> engine cohort, no warnings."""
    corpus = write_corpus(tmp_path / "corpus.csv", clinical_rows(), OUTCOME_FIELDS)
    records = read_corpus(corpus)
    vectors = extract_hidden(records, ExtractionConfig(checkpoint=checkpoint_a))
    manifest = emit_covariates(records, vectors, 3, tmp_path / "cohort")

    from hazardnet import load_cohort, validate_cohort
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cohort = validate_cohort(load_cohort(manifest))
    assert caught == []

    assert cohort.dimension == 768
    assert cohort.sequence_length == 3
    by_id = {s.id: s for s in cohort.subjects}
    assert list(by_id) == ["p1", "p2", "p3"]
    assert by_id["p1"].covariates.present_mask.tolist() == [False, True, True]
    assert by_id["p2"].covariates.present_mask.tolist() == [False, False, True]
    assert by_id["p3"].covariates.present_mask.tolist() == [True, True, True]
    assert (by_id["p1"].time_to_event, by_id["p1"].event) == (112.0, True)
    assert (by_id["p2"].time_to_event, by_id["p2"].event) == (366.0, False)
    assert (by_id["p3"].time_to_event, by_id["p3"].event) == (21.0, True)
    # newest slot of p3 carries the vector of its latest report, bit for bit
    newest = by_id["p3"].covariates.vectors[2]
    assert np.array_equal(newest, vectors[5].astype(np.float64))
