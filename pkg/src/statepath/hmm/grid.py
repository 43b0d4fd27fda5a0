"""Uniform time discretization of visit sequences.

A subject's visits are snapped onto a uniform grid of ``time_unit`` months;
steps between visits carry no observation (fully missing) and contribute an
emission factor of one. Visit age ``a`` maps to step ``floor(a/u + 0.5)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..data import Subject


def step_of(age: float, time_unit: float) -> int:
    return int(math.floor(age / time_unit + 0.5))


@dataclass(frozen=True)
class GridSequence:
    """One subject on the grid: (T, V) values with NaN for missing cells.

    ``visit_steps[i]`` is the row of ``values`` holding visit ``i``; distinct
    visits may share a row when they round to the same step.
    """

    subject_id: str
    start_step: int
    values: np.ndarray  # (T, V) float64, NaN = missing
    visit_steps: np.ndarray  # (n_visits,) int, offsets into values

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]


def discretize(subject: Subject, time_unit: float, variables: list[str]) -> GridSequence:
    """Map a subject's visits onto the grid; same-step visits merge later-wins."""
    steps = [step_of(v.age, time_unit) for v in subject.visits]
    start, end = steps[0], steps[-1]
    n_steps = end - start + 1
    values = np.full((n_steps, len(variables)), np.nan)
    for visit, step in zip(subject.visits, steps):
        row = step - start
        for j, name in enumerate(variables):
            value = visit.values.get(name)
            if value is not None:
                values[row, j] = value
    visit_steps = np.asarray([s - start for s in steps], dtype=np.int64)
    return GridSequence(subject_id=subject.id, start_step=start, values=values, visit_steps=visit_steps)
