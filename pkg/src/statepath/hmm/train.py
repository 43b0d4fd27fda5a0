"""Baum-Welch training with masked transitions and missing-data E-steps."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from ..errors import DegenerateData, EmptyInput
from .config import HmmConfig
from .inference import Batch, build_batch, forward_backward
from .model import BernoulliEmission, GaussianEmission, HmmModel

# Dirichlet concentration favoring self-transitions at initialization;
# disease states persist across consecutive grid steps.
_DIAGONAL_BIAS = 5.0


@dataclass
class _Params:
    pi: np.ndarray
    trans: np.ndarray
    bernoulli_p: dict[str, np.ndarray]
    gaussian_mean: dict[str, np.ndarray]
    gaussian_var: dict[str, np.ndarray]


@dataclass(frozen=True)
class FitResult:
    model: HmmModel
    loglik_history: list[float]
    restart: int


def train(ds: Dataset, cfg: HmmConfig) -> HmmModel:
    return train_detailed(ds, cfg).model


def train_detailed(ds: Dataset, cfg: HmmConfig) -> FitResult:
    """Run ``cfg.restarts`` seeded EM fits and keep the best training loglik.

    Deterministic given ``cfg.seed``: restart r draws its initialization from
    the r-th child of the seed sequence, and restarts run in order.
    """
    if not ds.subjects:
        raise EmptyInput("cannot train on an empty dataset")
    for var in cfg.variables:
        schema_var = ds.variable(var)
        if schema_var.role != "dynamic-observed":
            raise ValueError(f"emission variable {var!r} must have role dynamic-observed")

    batch = build_batch(ds, cfg)
    stats = _global_stats(batch, cfg)

    best: tuple[float, int, _Params, list[float]] | None = None
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
    for r in range(cfg.restarts):
        rng = np.random.default_rng(children[r])
        # Restart 0 seeds emissions from per-subject time quantiles: forward
        # masks cannot reorder states during EM, so at least one start must
        # align state identity with observation order. Remaining restarts
        # explore from unstructured random draws.
        structured = r == 0
        params = _init_params(rng, cfg, stats, batch if structured else None)
        params, history = _em(batch, cfg, params, stats)
        loglik = history[-1]
        if best is None or loglik > best[0]:
            best = (loglik, r, params, history)

    loglik, restart, params, history = best
    model = HmmModel(
        config=cfg,
        pi=params.pi,
        trans=params.trans,
        emissions=_emissions_of(cfg, params),
        train_loglik=float(loglik),
    )
    model.validate()
    return FitResult(model=model, loglik_history=history, restart=restart)


def _emissions_of(cfg: HmmConfig, params: _Params) -> dict:
    emissions = {}
    for var in cfg.variables:
        if cfg.emissions[var] == "bernoulli":
            emissions[var] = BernoulliEmission(p=params.bernoulli_p[var])
        else:
            emissions[var] = GaussianEmission(mean=params.gaussian_mean[var], variance=params.gaussian_var[var])
    return emissions


@dataclass(frozen=True)
class _GlobalStats:
    observed: dict[str, np.ndarray]  # var -> flat non-missing values
    var_floor: dict[str, float]  # var -> absolute variance floor


def _global_stats(batch: Batch, cfg: HmmConfig) -> _GlobalStats:
    observed = {}
    floors = {}
    for j, var in enumerate(batch.variables):
        x = batch.values[:, :, j]
        values = x[~np.isnan(x)]
        observed[var] = values
        if cfg.emissions[var] == "gaussian":
            global_var = float(np.var(values)) if values.size else 0.0
            if global_var <= 0.0:
                warnings.warn(
                    f"gaussian variable {var!r} is constant; training with floored variance",
                    DegenerateData,
                )
                floors[var] = cfg.variance_floor
            else:
                floors[var] = cfg.variance_floor * global_var
    return _GlobalStats(observed=observed, var_floor=floors)


def _quantile_means(batch: Batch, k: int) -> np.ndarray:
    """Per-variable means over the s-th time slice of every sequence, (K, V)."""
    n, t_max, n_vars = batch.values.shape
    sums = np.zeros((k, n_vars))
    counts = np.zeros((k, n_vars))
    for i in range(n):
        t_len = int(batch.lengths[i])
        slots = np.minimum((np.arange(t_len) * k) // max(t_len, 1), k - 1)
        for s in range(k):
            rows = batch.values[i, :t_len][slots == s]
            obs = ~np.isnan(rows)
            sums[s] += np.where(obs, rows, 0.0).sum(axis=0)
            counts[s] += obs.sum(axis=0)
    overall_sum = sums.sum(axis=0)
    overall_count = counts.sum(axis=0)
    overall = np.divide(overall_sum, overall_count, out=np.full(n_vars, 0.5), where=overall_count > 0)
    return np.divide(sums, counts, out=np.tile(overall, (k, 1)), where=counts > 0)


def _init_params(
    rng: np.random.Generator,
    cfg: HmmConfig,
    stats: _GlobalStats,
    batch: Batch | None = None,
) -> _Params:
    k = cfg.n_states
    mask = cfg.mask

    if batch is not None:
        # Deterministic structured start: earlier states get more initial
        # mass, transitions keep a fixed self-bias over allowed cells.
        pi = 0.5 ** np.arange(k)
        pi /= pi.sum()
        trans = np.zeros((k, k))
        for i in range(k):
            allowed = np.flatnonzero(mask[i])
            if allowed.size == 1:
                trans[i, i] = 1.0
            else:
                trans[i, allowed] = 0.2 / (allowed.size - 1)
                trans[i, i] = 0.8
    else:
        pi = rng.dirichlet(np.ones(k))
        trans = np.zeros((k, k))
        for i in range(k):
            allowed = np.flatnonzero(mask[i])
            alpha = np.where(allowed == i, _DIAGONAL_BIAS, 1.0)
            trans[i, allowed] = rng.dirichlet(alpha) if allowed.size > 1 else 1.0

    slice_means = _quantile_means(batch, k) if batch is not None else None
    bernoulli_p: dict[str, np.ndarray] = {}
    gaussian_mean: dict[str, np.ndarray] = {}
    gaussian_var: dict[str, np.ndarray] = {}
    for j, var in enumerate(cfg.variables):
        if cfg.emissions[var] == "bernoulli":
            if slice_means is not None:
                bernoulli_p[var] = np.clip(slice_means[:, j], 0.05, 0.95)
            else:
                bernoulli_p[var] = rng.uniform(0.2, 0.8, size=k)
        else:
            values = stats.observed[var]
            if slice_means is not None and values.size:
                gaussian_mean[var] = slice_means[:, j].copy()
                base_var = max(float(np.var(values)), stats.var_floor[var])
            elif values.size:
                gaussian_mean[var] = rng.choice(values, size=k, replace=True)
                base_var = max(float(np.var(values)), stats.var_floor[var])
            else:
                gaussian_mean[var] = rng.normal(0.0, 1.0, size=k)
                base_var = stats.var_floor[var]
            gaussian_var[var] = np.full(k, base_var)
    return _Params(pi=pi, trans=trans, bernoulli_p=bernoulli_p, gaussian_mean=gaussian_mean, gaussian_var=gaussian_var)


def _emission_matrix(batch: Batch, cfg: HmmConfig, params: _Params) -> np.ndarray:
    n, t, _ = batch.values.shape
    out = np.ones((n, t, cfg.n_states))
    for j, var in enumerate(batch.variables):
        x = batch.values[:, :, j]
        obs = ~np.isnan(x)
        if not obs.any():
            continue
        x0 = np.where(obs, x, 0.0)
        if cfg.emissions[var] == "bernoulli":
            p = params.bernoulli_p[var]
            lik = x0[:, :, None] * p + (1.0 - x0[:, :, None]) * (1.0 - p)
        else:
            sd = np.sqrt(params.gaussian_var[var])
            z = (x0[:, :, None] - params.gaussian_mean[var]) / sd
            lik = np.exp(-0.5 * z * z) / (np.sqrt(2.0 * np.pi) * sd)
        out *= np.where(obs[:, :, None], lik, 1.0)
    return out


def _em(batch: Batch, cfg: HmmConfig, params: _Params, stats: _GlobalStats) -> tuple[_Params, list[float]]:
    """Iterate E/M until the relative loglik gain drops below rel_tol.

    Returns the parameters whose loglik is the last history entry; the
    pending M-step after the final E-step is discarded, so the reported
    train_loglik is exact for the returned parameters.
    """
    history: list[float] = []
    prev = -np.inf
    for _ in range(cfg.max_iters):
        b = _emission_matrix(batch, cfg, params)
        fb = forward_backward(params.pi, params.trans, b, batch.lengths)
        loglik = float(fb.logliks.sum())
        history.append(loglik)
        if np.isfinite(loglik) and np.isfinite(prev):
            if loglik - prev < cfg.rel_tol * abs(prev):
                break
        prev = loglik
        params = _m_step(batch, cfg, params, stats, b, fb)
    else:
        # max_iters exhausted: refresh the loglik for the final parameters
        b = _emission_matrix(batch, cfg, params)
        fb = forward_backward(params.pi, params.trans, b, batch.lengths)
        history.append(float(fb.logliks.sum()))
    return params, history


def _m_step(batch, cfg, params, stats, b, fb) -> _Params:
    k = cfg.n_states
    mask = cfg.mask
    lengths = batch.lengths
    gamma = fb.gamma

    pi = gamma[:, 0, :].mean(axis=0)
    pi = pi / pi.sum()

    xi_sum = np.zeros((k, k))
    for t in range(batch.max_steps - 1):
        active = (t + 1) < lengths
        if not active.any():
            break
        c_next = np.where(fb.scales[:, t + 1] > 0.0, fb.scales[:, t + 1], 1.0)
        w = (b[:, t + 1, :] * fb.betas[:, t + 1, :]) / c_next[:, None]
        w = np.where(active[:, None], w, 0.0)
        xi_sum += fb.alphas[:, t, :].T @ w
    xi_sum *= params.trans
    trans = np.array(params.trans)
    row_totals = xi_sum.sum(axis=1)
    nonzero = row_totals > 0.0
    trans[nonzero] = xi_sum[nonzero] / row_totals[nonzero, None]
    trans *= mask  # exact zeros on masked cells regardless of float dust

    bernoulli_p = {}
    gaussian_mean = {}
    gaussian_var = {}
    for j, var in enumerate(batch.variables):
        x = batch.values[:, :, j]
        obs = ~np.isnan(x)
        x0 = np.where(obs, x, 0.0)
        w = np.where(obs[:, :, None], gamma, 0.0)  # (N,T,K)
        denom = w.sum(axis=(0, 1))  # (K,)
        num = (w * x0[:, :, None]).sum(axis=(0, 1))
        safe = denom > 0.0
        if cfg.emissions[var] == "bernoulli":
            p = np.array(params.bernoulli_p[var])
            p[safe] = num[safe] / denom[safe]
            bernoulli_p[var] = np.clip(p, 0.0, 1.0)
        else:
            mean = np.array(params.gaussian_mean[var])
            mean[safe] = num[safe] / denom[safe]
            sq = (w * (x0[:, :, None] - mean) ** 2).sum(axis=(0, 1))
            var_new = np.array(params.gaussian_var[var])
            var_new[safe] = sq[safe] / denom[safe]
            gaussian_mean[var] = mean
            gaussian_var[var] = np.maximum(var_new, stats.var_floor[var])
    return _Params(pi=pi, trans=trans, bernoulli_p=bernoulli_p, gaussian_mean=gaussian_mean, gaussian_var=gaussian_var)
