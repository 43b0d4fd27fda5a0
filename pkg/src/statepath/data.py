"""Longitudinal observation data model and CSV ingestion.

Three comma-delimited UTF-8 files describe a study export:

* visits file: header ``subject_id,age_months,<dynamic variable...>``, one
  row per visit; an empty cell is a missing value.
* statics file: header ``subject_id,<static variable...>``; one row per
  subject; values are free categorical strings.
* events file: header ``subject_id,event_name,age_months``; sparse rows,
  one per recorded outcome event.

See docs/data-format.md for the full format contract.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import (
    MalformedRow,
    NonNumericValue,
    SubjectWithNoVisits,
    UnknownVariable,
)

KINDS = ("binary", "continuous", "categorical")
ROLES = ("dynamic-observed", "dynamic-context", "static", "outcome-event")

# Ages are real months; rows whose ages agree at this precision collide.
_AGE_DECIMALS = 9


@dataclass(frozen=True)
class Variable:
    """One schema entry: a named variable with a value kind and a role."""

    name: str
    kind: str
    role: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r} for variable {self.name!r}")
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r} for variable {self.name!r}")
        if self.role == "outcome-event" and self.kind != "continuous":
            raise ValueError(f"outcome-event variable {self.name!r} must be continuous (age in months)")

    @property
    def is_dynamic(self) -> bool:
        return self.role in ("dynamic-observed", "dynamic-context")


@dataclass(frozen=True)
class Visit:
    subject_id: str
    age: float
    values: dict[str, Optional[float]]  # variable name -> value, None = missing


@dataclass(frozen=True)
class Subject:
    id: str
    visits: tuple[Visit, ...]
    statics: dict[str, str] = field(default_factory=dict)
    events: dict[str, float] = field(default_factory=dict)

    @property
    def n_visits(self) -> int:
        return len(self.visits)

    @property
    def ages(self) -> list[float]:
        return [v.age for v in self.visits]


@dataclass(frozen=True)
class Dataset:
    schema: tuple[Variable, ...]
    subjects: tuple[Subject, ...]

    def variable(self, name: str) -> Variable:
        for v in self.schema:
            if v.name == name:
                return v
        raise UnknownVariable(name)

    def variables(self, role: Optional[str] = None, kind: Optional[str] = None) -> list[Variable]:
        out = []
        for v in self.schema:
            if role is not None and v.role != role:
                continue
            if kind is not None and v.kind != kind:
                continue
            out.append(v)
        return out

    def subject(self, subject_id: str) -> Subject:
        for s in self.subjects:
            if s.id == subject_id:
                return s
        raise KeyError(subject_id)

    @property
    def subject_ids(self) -> list[str]:
        return [s.id for s in self.subjects]


@dataclass(frozen=True)
class DatasetSummary:
    subject_count: int
    visit_count: int
    age_range: Optional[tuple[float, float]]
    missing_rates: dict[str, float]  # dynamic variable -> fraction of missing cells
    event_counts: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "subject_count": self.subject_count,
            "visit_count": self.visit_count,
            "age_range": list(self.age_range) if self.age_range else None,
            "missing_rates": dict(self.missing_rates),
            "event_counts": dict(self.event_counts),
        }


def schema_to_dict(schema) -> dict:
    return {"version": 1, "variables": [{"name": v.name, "kind": v.kind, "role": v.role} for v in schema]}


def schema_from_dict(doc: dict) -> tuple[Variable, ...]:
    variables = tuple(Variable(e["name"], e["kind"], e["role"]) for e in doc["variables"])
    names = [v.name for v in variables]
    if len(set(names)) != len(names):
        raise ValueError("duplicate variable names in schema")
    return variables


def _parse_number(raw: str, line: int, column: str) -> Optional[float]:
    raw = raw.strip()
    if raw == "":
        return None
    try:
        value = float(raw)
    except ValueError:
        raise NonNumericValue(line, column, raw) from None
    if math.isnan(value) or math.isinf(value):
        raise NonNumericValue(line, column, raw)
    return value


def _read_rows(path: str):
    with open(path, encoding="utf-8", newline="") as fh:
        yield from enumerate(csv.reader(fh), start=1)


def ingest_csv(visits_file: str, statics_file: str, events_file: str, schema) -> Dataset:
    """Parse and validate the three-file export into a Dataset.

    Per subject, visits are sorted by age; two rows rounding to the same age
    are merged field-wise with the later row winning per non-missing field.
    A subject mentioned only in statics or events raises SubjectWithNoVisits.
    """
    schema = tuple(schema)
    names = [v.name for v in schema]
    if len(set(names)) != len(names):
        raise ValueError("duplicate variable names in schema")
    by_name = {v.name: v for v in schema}
    dynamic = [v for v in schema if v.is_dynamic]

    visits = _ingest_visits(visits_file, dynamic)
    statics = _ingest_statics(statics_file, by_name)
    events = _ingest_events(events_file, by_name)

    for sid in list(statics) + list(events):
        if sid not in visits:
            raise SubjectWithNoVisits(sid)

    subjects = []
    for sid in sorted(visits):
        merged = _merge_visits(sid, visits[sid])
        subjects.append(Subject(id=sid, visits=merged, statics=statics.get(sid, {}), events=events.get(sid, {})))
    return Dataset(schema=schema, subjects=tuple(subjects))


def _ingest_visits(path: str, dynamic: list[Variable]) -> dict[str, list[Visit]]:
    rows = _read_rows(path)
    try:
        line, header = next(rows)
    except StopIteration:
        raise MalformedRow(1, "visits file is empty") from None
    if len(header) < 2 or header[0] != "subject_id" or header[1] != "age_months":
        raise MalformedRow(line, "visits header must start with subject_id,age_months")
    columns = header[2:]
    expected = {v.name for v in dynamic}
    for col in columns:
        if col not in expected:
            raise UnknownVariable(col)
    missing_cols = expected - set(columns)
    if missing_cols:
        raise MalformedRow(line, f"visits header lacks dynamic variables: {sorted(missing_cols)}")
    kind = {v.name: v.kind for v in dynamic}

    out: dict[str, list[Visit]] = {}
    for line, row in rows:
        if not row or (len(row) == 1 and row[0].strip() == ""):
            continue
        if len(row) != len(header):
            raise MalformedRow(line, f"expected {len(header)} cells, got {len(row)}")
        sid = row[0].strip()
        if not sid:
            raise MalformedRow(line, "empty subject_id")
        age = _parse_number(row[1], line, "age_months")
        if age is None:
            raise MalformedRow(line, "empty age_months")
        if age < 0:
            raise MalformedRow(line, f"negative age {age}")
        values: dict[str, Optional[float]] = {}
        for col, raw in zip(columns, row[2:]):
            value = _parse_number(raw, line, col)
            if value is not None and kind[col] == "binary" and value not in (0.0, 1.0):
                raise MalformedRow(line, f"binary variable {col!r} has value {value}")
            values[col] = value
        out.setdefault(sid, []).append(Visit(subject_id=sid, age=age, values=values))
    return out


def _ingest_statics(path: str, by_name: dict[str, Variable]) -> dict[str, dict[str, str]]:
    rows = _read_rows(path)
    try:
        line, header = next(rows)
    except StopIteration:
        return {}
    if not header or header[0] != "subject_id":
        raise MalformedRow(line, "statics header must start with subject_id")
    columns = header[1:]
    for col in columns:
        if col not in by_name or by_name[col].role != "static":
            raise UnknownVariable(col)

    out: dict[str, dict[str, str]] = {}
    for line, row in rows:
        if not row or (len(row) == 1 and row[0].strip() == ""):
            continue
        if len(row) != len(header):
            raise MalformedRow(line, f"expected {len(header)} cells, got {len(row)}")
        sid = row[0].strip()
        if not sid:
            raise MalformedRow(line, "empty subject_id")
        values = {col: raw.strip() for col, raw in zip(columns, row[1:]) if raw.strip() != ""}
        out[sid] = values
    return out


def _ingest_events(path: str, by_name: dict[str, Variable]) -> dict[str, dict[str, float]]:
    rows = _read_rows(path)
    try:
        line, header = next(rows)
    except StopIteration:
        return {}
    if header != ["subject_id", "event_name", "age_months"]:
        raise MalformedRow(line, "events header must be subject_id,event_name,age_months")

    out: dict[str, dict[str, float]] = {}
    for line, row in rows:
        if not row or (len(row) == 1 and row[0].strip() == ""):
            continue
        if len(row) != 3:
            raise MalformedRow(line, f"expected 3 cells, got {len(row)}")
        sid, name, raw_age = row[0].strip(), row[1].strip(), row[2]
        if not sid:
            raise MalformedRow(line, "empty subject_id")
        if name not in by_name or by_name[name].role != "outcome-event":
            raise UnknownVariable(name)
        age = _parse_number(raw_age, line, "age_months")
        if age is None:
            raise MalformedRow(line, "empty age_months")
        if age < 0:
            raise MalformedRow(line, f"negative event age {age}")
        out.setdefault(sid, {})[name] = age
    return out


def _merge_visits(sid: str, raw: list[Visit]) -> tuple[Visit, ...]:
    """Sort by age and merge same-age collisions, later row winning per field."""
    by_age: dict[float, Visit] = {}
    order: list[float] = []
    for visit in raw:
        key = round(visit.age, _AGE_DECIMALS)
        if key not in by_age:
            by_age[key] = Visit(subject_id=sid, age=key, values=dict(visit.values))
            order.append(key)
        else:
            merged = dict(by_age[key].values)
            for name, value in visit.values.items():
                if value is not None:
                    merged[name] = value
            by_age[key] = Visit(subject_id=sid, age=key, values=merged)
    return tuple(by_age[a] for a in sorted(order))


def restrict(ds: Dataset, subject_ids) -> Dataset:
    """A Dataset containing only the given subjects, in dataset order."""
    wanted = set(subject_ids)
    return Dataset(schema=ds.schema, subjects=tuple(s for s in ds.subjects if s.id in wanted))


def summarize(ds: Dataset) -> DatasetSummary:
    """Counts of subjects and visits, per-variable missing rates, age range."""
    visit_count = sum(s.n_visits for s in ds.subjects)
    ages = [v.age for s in ds.subjects for v in s.visits]
    age_range = (min(ages), max(ages)) if ages else None
    missing_rates = {}
    for var in ds.variables():
        if not var.is_dynamic:
            continue
        missing = sum(1 for s in ds.subjects for v in s.visits if v.values.get(var.name) is None)
        missing_rates[var.name] = missing / visit_count if visit_count else 0.0
    event_counts: dict[str, int] = {v.name: 0 for v in ds.variables(role="outcome-event")}
    for s in ds.subjects:
        for name in s.events:
            event_counts[name] += 1
    return DatasetSummary(
        subject_count=len(ds.subjects),
        visit_count=visit_count,
        age_range=age_range,
        missing_rates=missing_rates,
        event_counts=event_counts,
    )


def _format_number(value: float) -> str:
    # repr keeps the exact binary64 value across a round trip
    return repr(int(value)) if float(value).is_integer() else repr(value)


def export_csv(ds: Dataset, visits_file: str, statics_file: str, events_file: str) -> None:
    """Write a Dataset back to the three-file layout accepted by ingest_csv."""
    dynamic = [v.name for v in ds.variables() if v.is_dynamic]
    static_cols = [v.name for v in ds.variables(role="static")]

    with open(visits_file, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "age_months"] + dynamic)
        for s in ds.subjects:
            for visit in s.visits:
                row = [s.id, _format_number(visit.age)]
                row += ["" if visit.values.get(n) is None else _format_number(visit.values[n]) for n in dynamic]
                writer.writerow(row)

    with open(statics_file, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id"] + static_cols)
        for s in ds.subjects:
            if s.statics:
                writer.writerow([s.id] + [s.statics.get(n, "") for n in static_cols])

    with open(events_file, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "event_name", "age_months"])
        for s in ds.subjects:
            for name in sorted(s.events):
                writer.writerow([s.id, name, _format_number(s.events[name])])
