"""State-count selection by cross-validated held-out log-likelihood."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import Dataset, restrict
from ..errors import FoldTooSmall
from .config import HmmConfig
from .inference import dataset_logliks
from .train import train


@dataclass(frozen=True)
class CvRow:
    n_states: int
    fold_scores: tuple[float, ...]  # held-out loglik per visit, one per fold
    mean_score: float

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "fold_scores": [float(x) for x in self.fold_scores],
            "mean_heldout_loglik_per_visit": float(self.mean_score),
        }


def assign_folds(n_subjects: int, folds: int, seed: int) -> list[list[int]]:
    """Deterministic partition of subject indices into ``folds`` groups."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if folds > n_subjects:
        raise FoldTooSmall(f"{folds} folds over {n_subjects} subjects leaves an empty fold")
    perm = np.random.default_rng(seed).permutation(n_subjects)
    return [sorted(int(i) for i in perm[f::folds]) for f in range(folds)]


def cross_validate(ds: Dataset, cfgs: list[HmmConfig], folds: int, seed: int) -> list[CvRow]:
    """Per config: train on k-1 folds, score the held-out fold per visit.

    Subjects (never individual visits) are partitioned; the fold assignment
    depends only on ``seed`` and the dataset order.
    """
    groups = assign_folds(len(ds.subjects), folds, seed)
    ids = ds.subject_ids
    rows = []
    for cfg in cfgs:
        scores = []
        for fold in groups:
            held = [ids[i] for i in fold]
            held_set = set(held)
            rest = [sid for sid in ids if sid not in held_set]
            model = train(restrict(ds, rest), cfg)
            logliks = dataset_logliks(model, ds, held)
            n_visits = sum(ds.subject(sid).n_visits for sid in held)
            scores.append(float(logliks.sum()) / n_visits)
        rows.append(
            CvRow(
                n_states=cfg.n_states,
                fold_scores=tuple(scores),
                mean_score=float(np.mean(scores)),
            )
        )
    return rows
