"""Per-visit state labels and smoothed posteriors for every subject."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from .inference import build_batch, emission_likelihood, forward_backward, viterbi_path
from .model import HmmModel


@dataclass(frozen=True)
class DecodedVisit:
    age: float
    state: int
    posterior: tuple[float, ...]


@dataclass(frozen=True)
class DecodedSubject:
    subject_id: str
    visits: tuple[DecodedVisit, ...]
    loglik: float

    @property
    def labels(self) -> list[int]:
        return [v.state for v in self.visits]

    @property
    def ages(self) -> list[float]:
        return [v.age for v in self.visits]

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "loglik": float(self.loglik),
            "visits": [
                {"age": v.age, "state": v.state, "posterior": list(v.posterior)} for v in self.visits
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DecodedSubject":
        return cls(
            subject_id=doc["subject_id"],
            loglik=float(doc["loglik"]),
            visits=tuple(
                DecodedVisit(age=float(v["age"]), state=int(v["state"]), posterior=tuple(v["posterior"]))
                for v in doc["visits"]
            ),
        )


def decode(model: HmmModel, ds: Dataset) -> list[DecodedSubject]:
    """Viterbi labels plus forward-backward posteriors at every visit step."""
    batch = build_batch(ds, model.config)
    b = emission_likelihood(model, batch.values)
    fb = forward_backward(model.pi, model.trans, b, batch.lengths)

    decoded = []
    for i, subject in enumerate(ds.subjects):
        t_len = int(batch.lengths[i])
        path = viterbi_path(model.pi, model.trans, b[i, :t_len])
        gamma = fb.gamma[i]
        visits = []
        for visit, step in zip(subject.visits, batch.visit_steps[i]):
            posterior = gamma[step]
            visits.append(
                DecodedVisit(
                    age=visit.age,
                    state=int(path[step]),
                    posterior=tuple(float(x) for x in posterior),
                )
            )
        decoded.append(DecodedSubject(subject_id=subject.id, visits=tuple(visits), loglik=float(fb.logliks[i])))
    return decoded


def decoded_to_dict(decoded: list[DecodedSubject], model_id: str | None = None) -> dict:
    doc = {"version": 1, "subjects": [d.to_dict() for d in decoded]}
    if model_id is not None:
        doc["model_id"] = model_id
    return doc


def decoded_from_dict(doc: dict) -> list[DecodedSubject]:
    if doc.get("version") != 1:
        raise ValueError(f"unsupported decoded format version {doc.get('version')!r}")
    return [DecodedSubject.from_dict(d) for d in doc["subjects"]]
