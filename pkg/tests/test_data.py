"""CSV ingestion, validation, merging, and round-trip behavior."""

import pytest

from statepath.data import (
    Dataset,
    Variable,
    export_csv,
    ingest_csv,
    schema_from_dict,
    schema_to_dict,
    summarize,
)
from statepath.errors import (
    MalformedRow,
    NonNumericValue,
    SubjectWithNoVisits,
    UnknownVariable,
)
from statepath.hmm import generate

SCHEMA = (
    Variable("v1", "binary", "dynamic-observed"),
    Variable("v2", "binary", "dynamic-observed"),
    Variable("v3", "binary", "dynamic-observed"),
    Variable("SEX", "categorical", "static"),
    Variable("onset", "continuous", "outcome-event"),
)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def files(tmp_path, visits, statics="subject_id,SEX\n", events="subject_id,event_name,age_months\n"):
    return (
        write(tmp_path, "visits.csv", visits),
        write(tmp_path, "statics.csv", statics),
        write(tmp_path, "events.csv", events),
    )


def test_empty_cell_becomes_missing(tmp_path):
    v, s, e = files(tmp_path, "subject_id,age_months,v1,v2,v3\nS1,12.0,1,,0\n")
    ds = ingest_csv(v, s, e, SCHEMA)
    visit = ds.subjects[0].visits[0]
    assert visit.age == 12.0
    assert visit.values == {"v1": 1.0, "v2": None, "v3": 0.0}


def test_same_age_rows_merge_later_wins(tmp_path):
    v, s, e = files(
        tmp_path,
        "subject_id,age_months,v1,v2,v3\nS1,12.0,1,,\nS1,12.0,,0,\n",
    )
    ds = ingest_csv(v, s, e, SCHEMA)
    assert ds.subjects[0].n_visits == 1
    assert ds.subjects[0].visits[0].values == {"v1": 1.0, "v2": 0.0, "v3": None}


def test_event_row_parses(tmp_path):
    v, s, e = files(
        tmp_path,
        "subject_id,age_months,v1,v2,v3\nS1,12.0,1,0,0\n",
        events="subject_id,event_name,age_months\nS1,onset,96.5\n",
    )
    ds = ingest_csv(v, s, e, SCHEMA)
    assert ds.subjects[0].events == {"onset": 96.5}


def test_visits_sorted_and_strictly_increasing(tmp_path):
    v, s, e = files(
        tmp_path,
        "subject_id,age_months,v1,v2,v3\nS1,24,0,0,0\nS1,6,1,0,0\nS1,12,0,1,0\n",
    )
    ds = ingest_csv(v, s, e, SCHEMA)
    ages = ds.subjects[0].ages
    assert ages == sorted(ages)
    assert all(a < b for a, b in zip(ages, ages[1:]))


def test_unknown_variable_rejected(tmp_path):
    v, s, e = files(tmp_path, "subject_id,age_months,v1,v2,v3,bogus\nS1,1,0,0,0,0\n")
    with pytest.raises(UnknownVariable):
        ingest_csv(v, s, e, SCHEMA)


def test_non_numeric_value_reports_line(tmp_path):
    v, s, e = files(tmp_path, "subject_id,age_months,v1,v2,v3\nS1,1,0,0,0\nS1,2,zebra,0,0\n")
    with pytest.raises(NonNumericValue) as exc:
        ingest_csv(v, s, e, SCHEMA)
    assert exc.value.line == 3


def test_malformed_row_reports_line(tmp_path):
    v, s, e = files(tmp_path, "subject_id,age_months,v1,v2,v3\nS1,1,0,0\n")
    with pytest.raises(MalformedRow) as exc:
        ingest_csv(v, s, e, SCHEMA)
    assert exc.value.line == 2


def test_subject_with_no_visits_rejected(tmp_path):
    v, s, e = files(
        tmp_path,
        "subject_id,age_months,v1,v2,v3\nS1,1,0,0,0\n",
        statics="subject_id,SEX\nS1,F\nS2,M\n",
    )
    with pytest.raises(SubjectWithNoVisits):
        ingest_csv(v, s, e, SCHEMA)


def test_binary_domain_enforced(tmp_path):
    v, s, e = files(tmp_path, "subject_id,age_months,v1,v2,v3\nS1,1,2,0,0\n")
    with pytest.raises(MalformedRow):
        ingest_csv(v, s, e, SCHEMA)


def test_summarize_counts():
    from conftest import binary_dataset

    ds = binary_dataset(
        [
            ("S1", [0.0, 6.0, 12.0], [[1.0], [0.0], [1.0]]),
            ("S2", [3.0, 9.0], [[0.0], [None]]),
        ],
        n_vars=1,
    )
    summary = summarize(ds)
    assert summary.subject_count == 2
    assert summary.visit_count == 5
    assert summary.age_range == (0.0, 12.0)
    assert summary.missing_rates["m1"] == pytest.approx(0.2)


def test_summarize_all_missing_variable(tmp_path):
    v, s, e = files(
        tmp_path,
        "subject_id,age_months,v1,v2,v3\nS1,0,,1,0\nS1,240,,0,1\n",
    )
    ds = ingest_csv(v, s, e, SCHEMA)
    summary = summarize(ds)
    assert summary.missing_rates["v1"] == 1.0
    assert summary.age_range == (0.0, 240.0)


def test_ingest_export_ingest_is_identity(tmp_path):
    ds, _ = generate(n_states=3, n_subjects=12, n_visits=6, seed=5)
    v1, s1, e1 = (str(tmp_path / n) for n in ("v1.csv", "s1.csv", "e1.csv"))
    export_csv(ds, v1, s1, e1)
    again = ingest_csv(v1, s1, e1, ds.schema)
    v2, s2, e2 = (str(tmp_path / n) for n in ("v2.csv", "s2.csv", "e2.csv"))
    export_csv(again, v2, s2, e2)
    roundtrip = ingest_csv(v2, s2, e2, ds.schema)
    assert roundtrip == again
    # missing cells stay missing through the round trip
    for a, b in zip(again.subjects, roundtrip.subjects):
        for va, vb in zip(a.visits, b.visits):
            assert va.values == vb.values


def test_schema_round_trip():
    doc = schema_to_dict(SCHEMA)
    assert schema_from_dict(doc) == SCHEMA


def test_schema_rejects_bad_kind():
    with pytest.raises(ValueError):
        Variable("x", "ternary", "static")
    with pytest.raises(ValueError):
        Variable("e", "binary", "outcome-event")
