"""State-summary and pathway aggregations behind every view.

All operations take the decoded subjects plus an optional scope (subject-id
set) and return plain dict/list structures that serialize directly to JSON;
counts are exact integers, geometry and densities are floats in data units.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional, Sequence

import numpy as np

from .data import Dataset
from .errors import EmptyAges, EmptyScope, UnknownEvent
from .hmm.decode import DecodedSubject

HISTOGRAM_BINS = 10
DEFAULT_TIME_BIN = 12.0  # months


def _scoped(decoded: Sequence[DecodedSubject], scope: Optional[Iterable[str]]) -> list[DecodedSubject]:
    if scope is None:
        return list(decoded)
    wanted = set(scope)
    return [d for d in decoded if d.subject_id in wanted]


def _n_states(decoded: Sequence[DecodedSubject]) -> int:
    for d in decoded:
        if d.visits:
            return len(d.visits[0].posterior)
    return 0


# --- feature summary -----------------------------------------------------


def feature_summary(
    decoded: Sequence[DecodedSubject],
    ds: Dataset,
    scope: Optional[Iterable[str]] = None,
) -> dict:
    """Per (variable, state) stats over scoped visits.

    Histograms use 10 uniform bins over the variable's global (unscoped)
    range; binary variables bin on {0, 1}. normalized_mean min-max scales
    each variable's per-state means to [0, 1], 0.5 when the row is constant.
    """
    scoped = _scoped(decoded, scope)
    if not scoped:
        raise EmptyScope("feature summary needs at least one scoped subject")
    k = _n_states(scoped)
    by_id = {s.id: s for s in ds.subjects}
    variables = [v for v in ds.schema if v.is_dynamic]

    rows = []
    for var in variables:
        global_values = [
            value
            for s in ds.subjects
            for visit in s.visits
            if (value := visit.values.get(var.name)) is not None
        ]
        if var.kind == "binary":
            edges = [0.0, 0.5, 1.0]
        elif global_values:
            lo, hi = min(global_values), max(global_values)
            if lo == hi:
                edges = [lo, hi]
            else:
                edges = list(np.linspace(lo, hi, HISTOGRAM_BINS + 1))
        else:
            edges = [0.0, 1.0]

        per_state_values: list[list[float]] = [[] for _ in range(k)]
        per_state_missing = [0] * k
        per_state_visits = [0] * k
        for dec in scoped:
            subject = by_id[dec.subject_id]
            for visit, dvisit in zip(subject.visits, dec.visits):
                s = dvisit.state
                per_state_visits[s] += 1
                value = visit.values.get(var.name)
                if value is None:
                    per_state_missing[s] += 1
                else:
                    per_state_values[s].append(value)

        cells = []
        means: list[Optional[float]] = []
        for s in range(k):
            values = per_state_values[s]
            if values:
                arr = np.asarray(values)
                mean = float(arr.mean())
                std = float(arr.std())
                if var.kind == "binary":
                    counts = [int(np.sum(arr == 0.0)), int(np.sum(arr == 1.0))]
                elif len(edges) == 2:
                    counts = [len(values)]
                else:
                    counts = [int(c) for c in np.histogram(arr, bins=np.asarray(edges))[0]]
            else:
                mean = None
                std = None
                counts = [0] * max(len(edges) - 1, 1)
            means.append(mean)
            cells.append(
                {
                    "state": s,
                    "mean": mean,
                    "std": std,
                    "histogram": {"edges": [float(e) for e in edges], "counts": counts},
                    "n_visits": per_state_visits[s],
                    "n_missing": per_state_missing[s],
                }
            )

        defined = [m for m in means if m is not None]
        lo = min(defined) if defined else None
        hi = max(defined) if defined else None
        for cell, mean in zip(cells, means):
            if mean is None:
                cell["normalized_mean"] = None
            elif lo == hi:
                cell["normalized_mean"] = 0.5
            else:
                cell["normalized_mean"] = (mean - lo) / (hi - lo)
        rows.append({"name": var.name, "kind": var.kind, "role": var.role, "cells": cells})

    return {"n_states": k, "variables": rows}


# --- transition aggregations ----------------------------------------------


def chord_matrix(decoded: Sequence[DecodedSubject], scope: Optional[Iterable[str]] = None) -> dict:
    """Consecutive-visit transition counts; self-loops recorded, arcs skip them."""
    scoped = _scoped(decoded, scope)
    k = _n_states(scoped)
    counts = [[0] * k for _ in range(k)]
    node_sizes = [0] * k
    for dec in scoped:
        labels = dec.labels
        for s in labels:
            node_sizes[s] += 1
        for a, b in zip(labels, labels[1:]):
            counts[a][b] += 1
    arcs = [
        {"source": i, "target": j, "count": counts[i][j]}
        for i in range(k)
        for j in range(k)
        if i != j and counts[i][j] > 0
    ]
    return {"n_states": k, "counts": counts, "node_sizes": node_sizes, "arcs": arcs}


def _stack_columns(per_subject_states: dict[str, dict[int, int]], k: int, anchor: Optional[int]) -> list[dict]:
    """Shared stacking/link code: per subject, a map of column -> state."""
    columns: dict[int, dict[int, int]] = {}
    links: dict[int, dict[tuple[int, int], int]] = {}
    for states in per_subject_states.values():
        keys = sorted(states)
        for key in keys:
            columns.setdefault(key, {}).setdefault(states[key], 0)
            columns[key][states[key]] += 1
        for a, b in zip(keys, keys[1:]):
            if b == a + 1:
                links.setdefault(a, {}).setdefault((states[a], states[b]), 0)
                links[a][(states[a], states[b])] += 1

    out = []
    for key in sorted(columns):
        stacks = [{"state": s, "count": c} for s, c in sorted(columns[key].items())]
        column = {"index": key, "stacks": stacks}
        if anchor is not None:
            column["anchor_offset"] = sum(c["count"] for c in stacks if c["state"] < anchor)
        column["links"] = [
            {"source_state": a, "target_state": b, "count": c}
            for (a, b), c in sorted(links.get(key, {}).items())
        ]
        out.append(column)
    return out


def sankey_by_visit(
    decoded: Sequence[DecodedSubject],
    scope: Optional[Iterable[str]] = None,
    anchor: Optional[int] = None,
) -> dict:
    """Stacks per visit index (1-based) and links between consecutive visits."""
    scoped = _scoped(decoded, scope)
    k = _n_states(scoped)
    per_subject = {
        dec.subject_id: {i + 1: visit.state for i, visit in enumerate(dec.visits)} for dec in scoped
    }
    return {"n_states": k, "anchor": anchor, "columns": _stack_columns(per_subject, k, anchor)}


def sankey_by_time(
    decoded: Sequence[DecodedSubject],
    scope: Optional[Iterable[str]] = None,
    bin_months: float = DEFAULT_TIME_BIN,
) -> dict:
    """Stacks per time bin; the last visit in a bin sets the subject's state
    and the last known state carries forward across empty bins."""
    if bin_months <= 0:
        raise ValueError("bin_months must be positive")
    scoped = _scoped(decoded, scope)
    k = _n_states(scoped)
    per_subject: dict[str, dict[int, int]] = {}
    for dec in scoped:
        bins: dict[int, int] = {}
        for visit in dec.visits:  # visits are age-sorted; later visits win the bin
            bins[int(math.floor(visit.age / bin_months))] = visit.state
        first, last = min(bins), max(bins)
        filled: dict[int, int] = {}
        current = bins[first]
        for b in range(first, last + 1):
            if b in bins:
                current = bins[b]
            filled[b] = current
        per_subject[dec.subject_id] = filled
    columns = _stack_columns(per_subject, k, None)
    for column in columns:
        column["bin_start"] = column["index"] * bin_months
    return {"n_states": k, "bin_months": bin_months, "columns": columns}


def bipartite_sankey(
    decoded: Sequence[DecodedSubject],
    ds: Dataset,
    event: str,
    scope: Optional[Iterable[str]] = None,
) -> dict:
    """Links from each subject's first-visit state to its state at the visit
    nearest the event age; subjects without the event feed a no-event sink."""
    names = {v.name for v in ds.variables(role="outcome-event")}
    if event not in names:
        raise UnknownEvent(event)
    scoped = _scoped(decoded, scope)
    k = _n_states(scoped)
    by_id = {s.id: s for s in ds.subjects}
    links: dict[tuple[int, object], int] = {}
    for dec in scoped:
        if not dec.visits:
            continue
        start = dec.visits[0].state
        subject = by_id[dec.subject_id]
        age = subject.events.get(event)
        if age is None:
            target: object = "no-event"
        else:
            nearest = min(dec.visits, key=lambda v: (abs(v.age - age), v.age))
            target = nearest.state
        links.setdefault((start, target), 0)
        links[(start, target)] += 1
    return {
        "n_states": k,
        "event": event,
        "links": [
            {"source_state": s, "target": t, "count": c}
            for (s, t), c in sorted(links.items(), key=lambda kv: (kv[0][0], str(kv[0][1])))
        ],
    }


# --- kernel density -------------------------------------------------------


def silverman_bandwidth(ages: np.ndarray) -> float:
    n = ages.size
    std = float(ages.std(ddof=1)) if n > 1 else 0.0
    q75, q25 = np.percentile(ages, [75, 25])
    iqr = float(q75 - q25)
    h = 0.9 * min(std, iqr / 1.34) * n ** (-1.0 / 5.0)
    return h if h > 0 else 1.0


def kde(ages: Sequence[float], grid: tuple[float, float, int]) -> dict:
    """Gaussian-kernel density on a uniform grid with a mean marker."""
    arr = np.asarray(list(ages), dtype=float)
    if arr.size == 0:
        raise EmptyAges("kernel density needs at least one age")
    lo, hi, steps = grid
    if steps < 2 or hi <= lo:
        raise ValueError("grid must be (lo, hi, steps>=2) with hi > lo")
    h = silverman_bandwidth(arr)
    x = np.linspace(lo, hi, int(steps))
    z = (x[:, None] - arr[None, :]) / h
    density = np.exp(-0.5 * z * z).sum(axis=1) / (arr.size * h * math.sqrt(2.0 * math.pi))
    return {
        "x": [float(v) for v in x],
        "density": [float(v) for v in density],
        "mean": float(arr.mean()),
        "bandwidth": float(h),
        "n": int(arr.size),
    }


def event_ages(ds: Dataset, event: str, scope: Optional[Iterable[str]] = None) -> list[float]:
    names = {v.name for v in ds.variables(role="outcome-event")}
    if event not in names:
        raise UnknownEvent(event)
    wanted = None if scope is None else set(scope)
    return [
        s.events[event]
        for s in ds.subjects
        if event in s.events and (wanted is None or s.id in wanted)
    ]


def default_kde_grid(ages: Sequence[float], steps: int = 257) -> tuple[float, float, int]:
    arr = np.asarray(list(ages), dtype=float)
    h = silverman_bandwidth(arr)
    return (float(arr.min() - 5 * h), float(arr.max() + 5 * h), steps)
