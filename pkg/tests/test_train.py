"""EM training: recovery, monotonicity, determinism, masks, serialization."""

import itertools
import json

import numpy as np
import pytest

from statepath.data import Dataset, Subject, Variable, Visit
from statepath.errors import DegenerateData
from statepath.hmm import HmmConfig, HmmModel, generate, train, train_detailed
from statepath.hmm.config import forward_mask
from statepath.jsonio import canonical_dumps

from conftest import binary_dataset


def forward_cfg(k, variables, **kw):
    return HmmConfig(
        n_states=k,
        emissions={v: "bernoulli" for v in variables},
        transition_mask=tuple(tuple(int(x) for x in row) for row in forward_mask(k)),
        **kw,
    )


def test_single_state_collapses_to_mle():
    ds = binary_dataset(
        [
            ("S1", [0.0, 1.0, 2.0], [[1.0], [0.0], [None]]),
            ("S2", [0.0, 1.0], [[1.0], [1.0]]),
        ],
        n_vars=1,
    )
    cfg = HmmConfig(n_states=1, emissions={"m1": "bernoulli"}, restarts=1, seed=0)
    model = train(ds, cfg)
    assert model.pi.tolist() == [1.0]
    assert model.trans.tolist() == [[1.0]]
    # empirical mean over the four observed cells: (1+0+1+1)/4
    assert model.emissions["m1"].p[0] == pytest.approx(0.75, abs=1e-9)


def test_same_seed_gives_bit_identical_models():
    ds, truth = generate(n_states=3, n_subjects=30, n_visits=10, seed=3)
    cfg = forward_cfg(3, truth["variables"], restarts=2, seed=99)
    a = train(ds, cfg)
    b = train(ds, cfg)
    assert canonical_dumps(a.to_dict()) == canonical_dumps(b.to_dict())


def test_em_loglik_monotone():
    for seed in (0, 1, 2):
        ds, truth = generate(n_states=3, n_subjects=40, n_visits=12, seed=seed)
        cfg = forward_cfg(3, truth["variables"], restarts=3, seed=seed)
        fit = train_detailed(ds, cfg)
        hist = np.asarray(fit.loglik_history)
        assert np.all(np.diff(hist) >= -1e-8)


def test_recovers_generating_parameters():
    ds, truth = generate(n_states=3, n_subjects=200, n_visits=20, seed=7, missing_rate=0.2)
    cfg = forward_cfg(3, truth["variables"], restarts=5, seed=7)
    model = train(ds, cfg)
    true_p = np.array([truth["emission_p"][v] for v in truth["variables"]]).T
    est_p = np.array([model.emissions[v].p for v in truth["variables"]]).T
    true_trans = np.array(truth["trans"])
    err = min(
        max(
            np.max(np.abs(est_p[list(perm)] - true_p)),
            np.max(np.abs(model.trans[np.ix_(list(perm), list(perm))] - true_trans)),
        )
        for perm in itertools.permutations(range(3))
    )
    assert err <= 0.05


def test_mask_zeroes_are_exact_after_training():
    ds, truth = generate(n_states=3, n_subjects=50, n_visits=10, seed=5)
    cfg = forward_cfg(3, truth["variables"], restarts=2, seed=5)
    model = train(ds, cfg)
    mask = np.asarray(cfg.mask)
    assert np.all(model.trans[mask == 0] == 0.0)
    assert np.max(np.abs(model.trans.sum(axis=1) - 1.0)) < 1e-9
    assert abs(model.pi.sum() - 1.0) < 1e-9


def test_constant_gaussian_variable_warns_and_trains():
    visits = lambda sid: tuple(
        Visit(subject_id=sid, age=float(t), values={"g1": 2.5, "m1": float(t % 2)}) for t in range(4)
    )
    schema = (
        Variable("g1", "continuous", "dynamic-observed"),
        Variable("m1", "binary", "dynamic-observed"),
    )
    ds = Dataset(schema=schema, subjects=(Subject(id="S1", visits=visits("S1")),))
    cfg = HmmConfig(
        n_states=2,
        emissions={"g1": "gaussian", "m1": "bernoulli"},
        restarts=1,
        seed=0,
    )
    with pytest.warns(DegenerateData):
        model = train(ds, cfg)
    assert np.all(model.emissions["g1"].variance >= cfg.variance_floor)


def test_gaussian_emissions_recover_means():
    rng = np.random.default_rng(17)
    # two states, one gaussian variable with well-separated means
    subjects = []
    for i in range(80):
        state = 0
        vals = []
        for t in range(10):
            mean = -2.0 if state == 0 else 3.0
            vals.append([float(rng.normal(mean, 0.5))])
            if state == 0 and rng.random() < 0.2:
                state = 1
        subjects.append(("S%03d" % i, list(range(10)), vals))
    schema = (Variable("g1", "continuous", "dynamic-observed"),)
    ds = Dataset(
        schema=schema,
        subjects=tuple(
            Subject(
                id=sid,
                visits=tuple(
                    Visit(subject_id=sid, age=float(a), values={"g1": v[0]}) for a, v in zip(ages, vals)
                ),
            )
            for sid, ages, vals in subjects
        ),
    )
    cfg = HmmConfig(
        n_states=2,
        emissions={"g1": "gaussian"},
        transition_mask=((1, 1), (0, 1)),
        restarts=3,
        seed=11,
    )
    model = train(ds, cfg)
    means = sorted(model.emissions["g1"].mean.tolist())
    assert means[0] == pytest.approx(-2.0, abs=0.15)
    assert means[1] == pytest.approx(3.0, abs=0.15)


def test_model_json_round_trip_is_lossless():
    ds, truth = generate(n_states=3, n_subjects=25, n_visits=8, seed=13)
    cfg = forward_cfg(3, truth["variables"], restarts=2, seed=13)
    model = train(ds, cfg)
    doc = json.loads(canonical_dumps(model.to_dict()))
    back = HmmModel.from_dict(doc)
    assert np.array_equal(back.pi, model.pi)
    assert np.array_equal(back.trans, model.trans)
    for v in truth["variables"]:
        assert np.array_equal(back.emissions[v].p, model.emissions[v].p)
    assert back.train_loglik == model.train_loglik
    assert canonical_dumps(back.to_dict()) == canonical_dumps(model.to_dict())
