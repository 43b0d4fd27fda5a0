"""Trained model container and its versioned JSON serialization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .config import HmmConfig

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class BernoulliEmission:
    p: np.ndarray  # (K,) success probability per state

    def to_dict(self) -> dict:
        return {"family": "bernoulli", "p": [float(x) for x in self.p]}


@dataclass(frozen=True)
class GaussianEmission:
    mean: np.ndarray  # (K,)
    variance: np.ndarray  # (K,), floored during training

    def to_dict(self) -> dict:
        return {
            "family": "gaussian",
            "mean": [float(x) for x in self.mean],
            "variance": [float(x) for x in self.variance],
        }


Emission = Union[BernoulliEmission, GaussianEmission]


def _emission_from_dict(doc: dict) -> Emission:
    if doc["family"] == "bernoulli":
        return BernoulliEmission(p=np.asarray(doc["p"], dtype=float))
    if doc["family"] == "gaussian":
        return GaussianEmission(
            mean=np.asarray(doc["mean"], dtype=float),
            variance=np.asarray(doc["variance"], dtype=float),
        )
    raise ValueError(f"unknown emission family {doc['family']!r}")


@dataclass(frozen=True)
class HmmModel:
    """Initial distribution, masked row-stochastic transitions, emissions."""

    config: HmmConfig
    pi: np.ndarray  # (K,)
    trans: np.ndarray  # (K, K), zero wherever the mask is zero
    emissions: dict[str, Emission]  # variable name -> per-state parameters
    train_loglik: float

    @property
    def n_states(self) -> int:
        return self.config.n_states

    def validate(self, atol: float = 1e-9) -> None:
        K = self.n_states
        if self.pi.shape != (K,) or self.trans.shape != (K, K):
            raise ValueError("parameter shapes do not match n_states")
        if abs(float(self.pi.sum()) - 1.0) > atol:
            raise ValueError("pi must sum to 1")
        if np.max(np.abs(self.trans.sum(axis=1) - 1.0)) > atol:
            raise ValueError("transition rows must sum to 1")
        if np.any(self.trans[self.config.mask == 0] != 0.0):
            raise ValueError("masked-out transition cells must be exactly zero")
        for var in self.config.variables:
            if var not in self.emissions:
                raise ValueError(f"missing emission parameters for {var!r}")

    def to_dict(self) -> dict:
        return {
            "version": MODEL_FORMAT_VERSION,
            "config": self.config.to_dict(),
            "pi": [float(x) for x in self.pi],
            "trans": [[float(x) for x in row] for row in self.trans],
            "emissions": {var: emission.to_dict() for var, emission in sorted(self.emissions.items())},
            "train_loglik": float(self.train_loglik),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "HmmModel":
        if doc.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {doc.get('version')!r}")
        model = cls(
            config=HmmConfig.from_dict(doc["config"]),
            pi=np.asarray(doc["pi"], dtype=float),
            trans=np.asarray(doc["trans"], dtype=float),
            emissions={var: _emission_from_dict(e) for var, e in doc["emissions"].items()},
            train_loglik=float(doc["train_loglik"]),
        )
        model.validate()
        return model

    def permuted(self, perm: list[int]) -> "HmmModel":
        """Relabel states by ``perm`` (new index i was old index perm[i])."""
        idx = np.asarray(perm)
        emissions: dict[str, Emission] = {}
        for var, emission in self.emissions.items():
            if isinstance(emission, BernoulliEmission):
                emissions[var] = BernoulliEmission(p=emission.p[idx])
            else:
                emissions[var] = GaussianEmission(mean=emission.mean[idx], variance=emission.variance[idx])
        mask = self.config.mask[np.ix_(idx, idx)]
        config = HmmConfig(
            n_states=self.config.n_states,
            emissions=dict(self.config.emissions),
            time_unit=self.config.time_unit,
            transition_mask=tuple(tuple(int(x) for x in row) for row in mask),
            restarts=self.config.restarts,
            seed=self.config.seed,
            max_iters=self.config.max_iters,
            rel_tol=self.config.rel_tol,
            variance_floor=self.config.variance_floor,
        )
        return HmmModel(
            config=config,
            pi=self.pi[idx],
            trans=self.trans[np.ix_(idx, idx)],
            emissions=emissions,
            train_loglik=self.train_loglik,
        )
