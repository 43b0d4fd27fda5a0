"""Viterbi/posterior decoding of whole datasets."""

import numpy as np
import pytest

from statepath.hmm import HmmConfig, HmmModel, decode, decoded_from_dict, decoded_to_dict, generate, train
from statepath.hmm.model import BernoulliEmission

from conftest import binary_dataset


def two_state_model():
    cfg = HmmConfig(n_states=2, emissions={"m1": "bernoulli"}, seed=0)
    return HmmModel(
        config=cfg,
        pi=np.array([0.5, 0.5]),
        trans=np.array([[0.7, 0.3], [0.4, 0.6]]),
        emissions={"m1": BernoulliEmission(p=np.array([0.9, 0.2]))},
        train_loglik=0.0,
    )


def test_decode_matches_enumerated_viterbi():
    ds = binary_dataset([("S1", [0.0, 1.0], [[1.0], [0.0]])], n_vars=1)
    decoded = decode(two_state_model(), ds)
    assert decoded[0].labels == [0, 1]  # 0.108 beats 0.0315, 0.004, 0.048
    assert decoded[0].loglik == pytest.approx(np.log(0.1915), abs=1e-12)


def test_degenerate_chain_is_one_hot():
    cfg = HmmConfig(n_states=2, emissions={"m1": "bernoulli"}, seed=0)
    model = HmmModel(
        config=cfg,
        pi=np.array([1.0, 0.0]),
        trans=np.eye(2),
        emissions={"m1": BernoulliEmission(p=np.array([0.5, 0.5]))},
        train_loglik=0.0,
    )
    ds = binary_dataset([("S1", [0.0, 3.0, 7.0], [[1.0], [0.0], [1.0]])], n_vars=1)
    decoded = decode(model, ds)
    for visit in decoded[0].visits:
        assert visit.state == 0
        assert visit.posterior == (1.0, 0.0)


def test_posteriors_sum_to_one_and_entry_counts_match():
    ds, truth = generate(n_states=3, n_subjects=25, n_visits=9, seed=2)
    cfg = HmmConfig(n_states=3, emissions={v: "bernoulli" for v in truth["variables"]}, restarts=2, seed=2)
    model = train(ds, cfg)
    decoded = decode(model, ds)
    assert len(decoded) == len(ds.subjects)
    for subject, dec in zip(ds.subjects, decoded):
        assert len(dec.visits) == subject.n_visits
        for visit in dec.visits:
            assert sum(visit.posterior) == pytest.approx(1.0, abs=1e-9)
            assert 0 <= visit.state < 3


def test_viterbi_labels_feasible_under_mask():
    from statepath.hmm.config import forward_mask

    ds, truth = generate(n_states=3, n_subjects=30, n_visits=12, seed=4)
    cfg = HmmConfig(
        n_states=3,
        emissions={v: "bernoulli" for v in truth["variables"]},
        transition_mask=tuple(tuple(int(x) for x in row) for row in forward_mask(3)),
        restarts=2,
        seed=4,
    )
    model = train(ds, cfg)
    mask = np.asarray(cfg.mask)
    for dec in decode(model, ds):
        labels = dec.labels
        for a, b in zip(labels, labels[1:]):
            # grid steps between visits only ever move along allowed arcs,
            # so visit-to-visit moves stay within the mask's closure
            assert b >= a  # forward mask: states never decrease


def test_decoded_round_trip():
    ds, truth = generate(n_states=2, n_subjects=6, n_visits=5, seed=8)
    cfg = HmmConfig(n_states=2, emissions={v: "bernoulli" for v in truth["variables"]}, restarts=1, seed=8)
    decoded = decode(train(ds, cfg), ds)
    doc = decoded_to_dict(decoded, model_id="m-1")
    back = decoded_from_dict(doc)
    assert [d.to_dict() for d in back] == [d.to_dict() for d in decoded]
