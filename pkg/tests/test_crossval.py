"""Cross-validated state-count selection."""

import numpy as np
import pytest

from statepath.errors import FoldTooSmall
from statepath.hmm import HmmConfig, cross_validate, generate
from statepath.hmm.config import forward_mask
from statepath.hmm.crossval import assign_folds


def cfgs_for(ks, variables, seed, restarts=2):
    out = []
    for k in ks:
        out.append(
            HmmConfig(
                n_states=k,
                emissions={v: "bernoulli" for v in variables},
                transition_mask=tuple(tuple(int(x) for x in row) for row in forward_mask(k)),
                restarts=restarts,
                seed=seed,
            )
        )
    return out


def test_each_subject_held_out_exactly_once():
    groups = assign_folds(10, 2, seed=3)
    seen = sorted(i for g in groups for i in g)
    assert seen == list(range(10))
    assert all(len(g) == 5 for g in groups)


def test_fold_too_small():
    with pytest.raises(FoldTooSmall):
        assign_folds(3, 4, seed=0)


def test_same_seed_identical_tables():
    ds, truth = generate(n_states=3, n_subjects=30, n_visits=10, seed=6)
    cfgs = cfgs_for([2, 3], truth["variables"], seed=6, restarts=1)
    a = cross_validate(ds, cfgs, folds=2, seed=1)
    b = cross_validate(ds, cfgs, folds=2, seed=1)
    assert [r.to_dict() for r in a] == [r.to_dict() for r in b]


def test_generating_state_count_beats_smaller():
    ds, truth = generate(n_states=3, n_subjects=120, n_visits=15, seed=21)
    cfgs = cfgs_for([2, 3, 6], truth["variables"], seed=21)
    rows = cross_validate(ds, cfgs, folds=3, seed=21)
    by_k = {r.n_states: r.mean_score for r in rows}
    assert by_k[3] >= by_k[2]
