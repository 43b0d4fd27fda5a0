"""Model configuration: state count, time grid, emissions, transition mask."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

EMISSION_FAMILIES = ("bernoulli", "gaussian")


def full_mask(n_states: int) -> np.ndarray:
    return np.ones((n_states, n_states), dtype=np.int8)


def forward_mask(n_states: int) -> np.ndarray:
    """States advance one step at a time, never backward and never skipping."""
    mask = np.eye(n_states, dtype=np.int8)
    for i in range(n_states - 1):
        mask[i, i + 1] = 1
    return mask


def mask_from_name(name: str, n_states: int) -> np.ndarray:
    if name == "full":
        return full_mask(n_states)
    if name == "forward":
        return forward_mask(n_states)
    raise ValueError(f"unknown mask preset {name!r}")


@dataclass(frozen=True)
class HmmConfig:
    """Training configuration.

    ``emissions`` maps each observed dynamic variable to its family
    ("bernoulli" or "gaussian"). ``transition_mask`` is a KxK 0/1 matrix
    whose diagonal must be all ones; masked-out cells stay exactly zero in
    the learned transition matrix. ``variance_floor`` is a fraction of each
    gaussian variable's global variance.
    """

    n_states: int
    emissions: dict[str, str]
    time_unit: float = 1.0
    transition_mask: Optional[tuple[tuple[int, ...], ...]] = None
    restarts: int = 5
    seed: int = 0
    max_iters: int = 500
    rel_tol: float = 1e-6
    variance_floor: float = 1e-4
    _mask_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.n_states < 1:
            raise ValueError("n_states must be >= 1")
        if not self.emissions:
            raise ValueError("at least one emission variable is required")
        for var, family in self.emissions.items():
            if family not in EMISSION_FAMILIES:
                raise ValueError(f"unknown emission family {family!r} for {var!r}")
        if self.time_unit <= 0:
            raise ValueError("time_unit must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.transition_mask is not None:
            mask = np.asarray(self.transition_mask)
            if mask.shape != (self.n_states, self.n_states):
                raise ValueError("transition_mask must be KxK")
            if not np.all(np.isin(mask, (0, 1))):
                raise ValueError("transition_mask entries must be 0 or 1")
            if not np.all(np.diag(mask) == 1):
                raise ValueError("transition_mask diagonal must be all ones")

    @property
    def mask(self) -> np.ndarray:
        if "mask" not in self._mask_cache:
            if self.transition_mask is None:
                m = full_mask(self.n_states)
            else:
                m = np.asarray(self.transition_mask, dtype=np.int8)
            m.setflags(write=False)
            self._mask_cache["mask"] = m
        return self._mask_cache["mask"]

    @property
    def variables(self) -> list[str]:
        return sorted(self.emissions)

    def with_states(self, n_states: int) -> "HmmConfig":
        mask = None
        if self.transition_mask is not None:
            # Preset shapes survive a state-count change; arbitrary masks do not.
            base = np.asarray(self.transition_mask)
            if np.array_equal(base, full_mask(self.n_states)):
                mask = tuple(tuple(int(x) for x in row) for row in full_mask(n_states))
            elif np.array_equal(base, forward_mask(self.n_states)):
                mask = tuple(tuple(int(x) for x in row) for row in forward_mask(n_states))
            else:
                raise ValueError("cannot resize a custom transition mask")
        return HmmConfig(
            n_states=n_states,
            emissions=dict(self.emissions),
            time_unit=self.time_unit,
            transition_mask=mask,
            restarts=self.restarts,
            seed=self.seed,
            max_iters=self.max_iters,
            rel_tol=self.rel_tol,
            variance_floor=self.variance_floor,
        )

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "emissions": dict(sorted(self.emissions.items())),
            "time_unit": self.time_unit,
            "transition_mask": [[int(x) for x in row] for row in self.mask],
            "restarts": self.restarts,
            "seed": self.seed,
            "max_iters": self.max_iters,
            "rel_tol": self.rel_tol,
            "variance_floor": self.variance_floor,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "HmmConfig":
        return cls(
            n_states=int(doc["n_states"]),
            emissions=dict(doc["emissions"]),
            time_unit=float(doc.get("time_unit", 1.0)),
            transition_mask=tuple(tuple(int(x) for x in row) for row in doc["transition_mask"])
            if doc.get("transition_mask") is not None
            else None,
            restarts=int(doc.get("restarts", 5)),
            seed=int(doc.get("seed", 0)),
            max_iters=int(doc.get("max_iters", 500)),
            rel_tol=float(doc.get("rel_tol", 1e-6)),
            variance_floor=float(doc.get("variance_floor", 1e-4)),
        )
