"""Scaled forward-backward and Viterbi over discretized sequences.

All sequences of a dataset are padded to a common length and processed as
one (N, T, K) batch. Padding rows are fully missing, which leaves every
in-range quantity untouched: a fully-missing step has emission likelihood 1
for every state, so the scaled forward pass keeps its normalizer at 1 and
the backward recursion enters the valid range as the all-ones vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import Dataset, Subject
from .config import HmmConfig
from .grid import GridSequence, discretize
from .model import BernoulliEmission, GaussianEmission, HmmModel

_SQRT_2PI = float(np.sqrt(2.0 * np.pi))


@dataclass(frozen=True)
class Batch:
    """Padded stack of grid sequences plus bookkeeping to map visits back."""

    subject_ids: list[str]
    values: np.ndarray  # (N, T, V) float64, NaN = missing (incl. all padding)
    lengths: np.ndarray  # (N,) valid steps per sequence
    visit_steps: list[np.ndarray]  # per subject, grid row of each visit
    variables: list[str]

    @property
    def n_sequences(self) -> int:
        return self.values.shape[0]

    @property
    def max_steps(self) -> int:
        return self.values.shape[1]

    @property
    def step_mask(self) -> np.ndarray:
        # (N, T) True where the step belongs to the sequence
        t = np.arange(self.max_steps)
        return t[None, :] < self.lengths[:, None]


def build_batch(ds: Dataset, cfg: HmmConfig, subject_ids: list[str] | None = None) -> Batch:
    variables = cfg.variables
    subjects = ds.subjects if subject_ids is None else [ds.subject(sid) for sid in subject_ids]
    grids = [discretize(s, cfg.time_unit, variables) for s in subjects]
    return batch_from_grids(grids, variables)


def batch_from_grids(grids: list[GridSequence], variables: list[str]) -> Batch:
    n = len(grids)
    t_max = max(g.n_steps for g in grids)
    values = np.full((n, t_max, len(variables)), np.nan)
    lengths = np.empty(n, dtype=np.int64)
    for i, g in enumerate(grids):
        values[i, : g.n_steps] = g.values
        lengths[i] = g.n_steps
    return Batch(
        subject_ids=[g.subject_id for g in grids],
        values=values,
        lengths=lengths,
        visit_steps=[g.visit_steps for g in grids],
        variables=variables,
    )


def emission_likelihood(model: HmmModel, values: np.ndarray) -> np.ndarray:
    """Per-step, per-state likelihood of the observed (non-missing) cells.

    values: (..., V) with NaN marking missing cells. Returns (..., K).
    Missing cells contribute a factor of 1 (marginalized out).
    """
    out = np.ones(values.shape[:-1] + (model.n_states,))
    for j, var in enumerate(model.config.variables):
        x = values[..., j]
        observed = ~np.isnan(x)
        if not observed.any():
            continue
        emission = model.emissions[var]
        x0 = np.where(observed, x, 0.0)
        if isinstance(emission, BernoulliEmission):
            p = emission.p
            lik = x0[..., None] * p + (1.0 - x0[..., None]) * (1.0 - p)
        else:
            assert isinstance(emission, GaussianEmission)
            sd = np.sqrt(emission.variance)
            z = (x0[..., None] - emission.mean) / sd
            lik = np.exp(-0.5 * z * z) / (_SQRT_2PI * sd)
        out *= np.where(observed[..., None], lik, 1.0)
    return out


@dataclass(frozen=True)
class ForwardBackward:
    gamma: np.ndarray  # (N, T, K) smoothed posteriors, junk beyond lengths
    logliks: np.ndarray  # (N,)
    alphas: np.ndarray  # (N, T, K) scaled
    betas: np.ndarray  # (N, T, K) scaled
    scales: np.ndarray  # (N, T) forward normalizers


def forward_logliks(pi: np.ndarray, trans: np.ndarray, b: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Log-likelihood per sequence from a scaled forward pass only."""
    n, t_max, _ = b.shape
    alpha = pi[None, :] * b[:, 0, :]
    loglik = np.zeros(n)
    dead = np.zeros(n, dtype=bool)
    c = alpha.sum(axis=1)
    _accumulate_scale(loglik, dead, c, np.zeros(n, dtype=np.int64) < lengths)
    alpha = _renormalize(alpha, c)
    for t in range(1, t_max):
        alpha = (alpha @ trans) * b[:, t, :]
        c = alpha.sum(axis=1)
        _accumulate_scale(loglik, dead, c, t < lengths)
        alpha = _renormalize(alpha, c)
    loglik[dead] = -np.inf
    return loglik


def _accumulate_scale(loglik, dead, c, active):
    zero = (c <= 0.0) & active
    dead |= zero
    safe = np.where((c > 0.0) & active, c, 1.0)
    loglik += np.log(safe)


def _renormalize(alpha, c):
    return alpha / np.where(c > 0.0, c, 1.0)[:, None]


def forward_backward(pi: np.ndarray, trans: np.ndarray, b: np.ndarray, lengths: np.ndarray) -> ForwardBackward:
    n, t_max, k = b.shape
    alphas = np.empty((n, t_max, k))
    scales = np.empty((n, t_max))
    loglik = np.zeros(n)
    dead = np.zeros(n, dtype=bool)

    alpha = pi[None, :] * b[:, 0, :]
    c = alpha.sum(axis=1)
    _accumulate_scale(loglik, dead, c, np.zeros(n, dtype=np.int64) < lengths)
    alpha = _renormalize(alpha, c)
    alphas[:, 0], scales[:, 0] = alpha, c
    for t in range(1, t_max):
        alpha = (alpha @ trans) * b[:, t, :]
        c = alpha.sum(axis=1)
        _accumulate_scale(loglik, dead, c, t < lengths)
        alpha = _renormalize(alpha, c)
        alphas[:, t], scales[:, t] = alpha, c
    loglik[dead] = -np.inf

    betas = np.empty((n, t_max, k))
    beta = np.ones((n, k))
    betas[:, t_max - 1] = beta
    trans_t = trans.T
    for t in range(t_max - 2, -1, -1):
        c_next = np.where(scales[:, t + 1] > 0.0, scales[:, t + 1], 1.0)
        beta = ((beta * b[:, t + 1, :]) @ trans_t) / c_next[:, None]
        betas[:, t] = beta

    gamma = alphas * betas
    # Scaled alphas/betas already make each gamma row sum to 1; renormalize
    # defensively so downstream pies see exact unit mass.
    totals = gamma.sum(axis=2, keepdims=True)
    gamma = gamma / np.where(totals > 0.0, totals, 1.0)
    return ForwardBackward(gamma=gamma, logliks=loglik, alphas=alphas, betas=betas, scales=scales)


def viterbi_path(pi: np.ndarray, trans: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Most probable state sequence for one sequence of emissions (T, K).

    Ties resolve to the lexicographically smallest optimal path: the score
    pass runs backward, so reconstruction can pick the lowest feasible state
    greedily from the front.
    """
    t_len, k = b.shape
    with np.errstate(divide="ignore"):
        log_b = np.log(b)
        log_pi = np.log(pi)
        log_trans = np.log(trans)

    # nu[t, i]: best log-score of emitting steps t..T-1 given state i at t
    nu = np.empty((t_len, k))
    nu[t_len - 1] = log_b[t_len - 1]
    for t in range(t_len - 2, -1, -1):
        nu[t] = log_b[t] + np.max(log_trans + nu[t + 1][None, :], axis=1)

    path = np.empty(t_len, dtype=np.int64)
    path[0] = int(np.argmax(log_pi + nu[0]))
    for t in range(1, t_len):
        path[t] = int(np.argmax(log_trans[path[t - 1]] + nu[t]))
    return path


def loglikelihood(model: HmmModel, subject: Subject) -> float:
    """log P(observations) of one subject under the discretized model."""
    grid = discretize(subject, model.config.time_unit, model.config.variables)
    b = emission_likelihood(model, grid.values[None, :, :])
    lengths = np.asarray([grid.n_steps])
    return float(forward_logliks(model.pi, model.trans, b, lengths)[0])


def dataset_logliks(model: HmmModel, ds: Dataset, subject_ids: list[str] | None = None) -> np.ndarray:
    batch = build_batch(ds, model.config, subject_ids)
    b = emission_likelihood(model, batch.values)
    return forward_logliks(model.pi, model.trans, b, batch.lengths)
