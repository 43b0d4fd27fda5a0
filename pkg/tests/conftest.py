"""Shared fixtures and independent oracles used across the suite."""

import itertools

import numpy as np
import pytest

from statepath.data import Dataset, Subject, Variable, Visit


def enumerate_paths(pi, trans, b):
    """Brute-force path enumeration for one emission matrix b of shape (T, K).

    Returns (total_prob, posteriors (T, K), best_path) where best_path is the
    first maximal-probability path in lexicographic order.
    """
    pi = np.asarray(pi, dtype=float)
    trans = np.asarray(trans, dtype=float)
    b = np.asarray(b, dtype=float)
    t_len, k = b.shape
    total = 0.0
    posteriors = np.zeros((t_len, k))
    best_prob = -1.0
    best_path = None
    for path in itertools.product(range(k), repeat=t_len):
        prob = pi[path[0]] * b[0, path[0]]
        for t in range(1, t_len):
            prob *= trans[path[t - 1], path[t]] * b[t, path[t]]
        total += prob
        for t, s in enumerate(path):
            posteriors[t, s] += prob
        if prob > best_prob:
            best_prob = prob
            best_path = path
    if total > 0:
        posteriors /= total
    return total, posteriors, list(best_path)


def random_model_arrays(rng, k, n_vars, mask=None):
    """Random pi/trans/bernoulli-p arrays for oracle comparisons."""
    pi = rng.dirichlet(np.ones(k))
    trans = np.zeros((k, k))
    if mask is None:
        mask = np.ones((k, k), dtype=int)
    for i in range(k):
        allowed = np.flatnonzero(mask[i])
        row = rng.dirichlet(np.ones(allowed.size))
        trans[i, allowed] = row
    p = rng.uniform(0.05, 0.95, size=(k, n_vars))
    return pi, trans, p


def bernoulli_emission_matrix(p, obs):
    """Emission likelihoods for observations obs (T, V) with NaN = missing."""
    obs = np.asarray(obs, dtype=float)
    t_len, n_vars = obs.shape
    k = p.shape[0]
    b = np.ones((t_len, k))
    for t in range(t_len):
        for v in range(n_vars):
            x = obs[t, v]
            if np.isnan(x):
                continue
            for s in range(k):
                b[t, s] *= p[s, v] if x == 1.0 else 1.0 - p[s, v]
    return b


def make_subject(sid, ages, values_per_visit, var_names, statics=None, events=None):
    visits = tuple(
        Visit(subject_id=sid, age=float(a), values={n: v for n, v in zip(var_names, vals)})
        for a, vals in zip(ages, values_per_visit)
    )
    return Subject(id=sid, visits=visits, statics=statics or {}, events=events or {})


def binary_dataset(subject_rows, n_vars=1, statics_schema=(), events_schema=()):
    """Dataset with binary variables m1..mN from rows of (sid, ages, values)."""
    var_names = [f"m{i + 1}" for i in range(n_vars)]
    schema = [Variable(n, "binary", "dynamic-observed") for n in var_names]
    schema += [Variable(n, "categorical", "static") for n in statics_schema]
    schema += [Variable(n, "continuous", "outcome-event") for n in events_schema]
    subjects = []
    for row in subject_rows:
        sid, ages, values = row[0], row[1], row[2]
        statics = row[3] if len(row) > 3 else None
        events = row[4] if len(row) > 4 else None
        subjects.append(make_subject(sid, ages, values, var_names, statics, events))
    return Dataset(schema=tuple(schema), subjects=tuple(subjects))


@pytest.fixture(scope="session")
def synth_small():
    from statepath.hmm import generate

    ds, truth = generate(n_states=3, n_subjects=40, n_visits=12, seed=11)
    return ds, truth
