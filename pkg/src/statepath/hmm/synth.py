"""Synthetic cohort generator for tests, benchmarks, and the acceptance run.

Samples subjects from a known forward-only (or full) Markov chain with
Bernoulli markers, plus static variables and sparse outcome events, and
returns both the dataset and the generating parameters.
"""

from __future__ import annotations

import math

import numpy as np

from ..data import Dataset, Subject, Variable, Visit
from .config import mask_from_name


def true_emission_probs(n_states: int, n_vars: int) -> np.ndarray:
    """Well-separated per-state marker probabilities (binary-code pattern)."""
    p = np.empty((n_states, n_vars))
    for s in range(n_states):
        for v in range(n_vars):
            p[s, v] = 0.9 if (s >> v) & 1 else 0.1
    return p


def true_transition(n_states: int, mask_name: str) -> np.ndarray:
    if mask_name == "forward":
        trans = np.zeros((n_states, n_states))
        for i in range(n_states - 1):
            trans[i, i] = 0.85
            trans[i, i + 1] = 0.15
        trans[n_states - 1, n_states - 1] = 1.0
        return trans
    mask = mask_from_name(mask_name, n_states)
    trans = np.where(mask > 0, 0.2 / max(n_states - 1, 1), 0.0)
    np.fill_diagonal(trans, 0.0)
    row_rest = trans.sum(axis=1)
    np.fill_diagonal(trans, 1.0 - row_rest)
    return trans


def true_initial(n_states: int) -> np.ndarray:
    pi = np.zeros(n_states)
    pi[0] = 0.9 if n_states > 1 else 1.0
    if n_states > 1:
        pi[1] = 0.1
    return pi


def generate(
    n_states: int = 3,
    n_subjects: int = 200,
    n_visits: int = 20,
    seed: int = 0,
    missing_rate: float = 0.2,
    mask: str = "forward",
    visit_interval: float = 1.0,
) -> tuple[Dataset, dict]:
    """Sample a dataset; the second return value is the generating truth."""
    n_vars = max(3, math.ceil(math.log2(n_states)) if n_states > 1 else 1)
    var_names = [f"m{v + 1}" for v in range(n_vars)]
    pi = true_initial(n_states)
    trans = true_transition(n_states, mask)
    emit_p = true_emission_probs(n_states, n_vars)

    rng = np.random.default_rng(seed)
    horizon = (n_visits - 1) * visit_interval
    subjects = []
    for i in range(n_subjects):
        sid = f"S{i + 1:04d}"
        state = int(rng.choice(n_states, p=pi))
        visits = []
        for t in range(n_visits):
            values = {}
            for v, name in enumerate(var_names):
                if rng.random() < missing_rate:
                    values[name] = None
                else:
                    values[name] = float(rng.random() < emit_p[state, v])
            visits.append(Visit(subject_id=sid, age=t * visit_interval, values=values))
            if t + 1 < n_visits:
                state = int(rng.choice(n_states, p=trans[state]))
        statics = {
            "SEX": "F" if rng.random() < 0.5 else "M",
            "SITE": ["X", "Y", "Z"][int(rng.integers(3))],
        }
        events = {}
        if rng.random() < 0.7:
            events["diagnosis"] = round(float(rng.uniform(horizon * 0.5, horizon)), 1)
        if rng.random() < 0.5:
            events["first_marker"] = round(float(rng.uniform(0.0, horizon * 0.6)), 1)
        subjects.append(Subject(id=sid, visits=tuple(visits), statics=statics, events=events))

    schema = tuple(
        [Variable(name, "binary", "dynamic-observed") for name in var_names]
        + [
            Variable("SEX", "categorical", "static"),
            Variable("SITE", "categorical", "static"),
            Variable("diagnosis", "continuous", "outcome-event"),
            Variable("first_marker", "continuous", "outcome-event"),
        ]
    )
    ds = Dataset(schema=schema, subjects=tuple(subjects))
    truth = {
        "n_states": n_states,
        "mask": mask,
        "variables": var_names,
        "pi": [float(x) for x in pi],
        "trans": [[float(x) for x in row] for row in trans],
        "emission_p": {name: [float(emit_p[s, v]) for s in range(n_states)] for v, name in enumerate(var_names)},
        "visit_interval": visit_interval,
        "seed": seed,
        "missing_rate": missing_rate,
    }
    return ds, truth
