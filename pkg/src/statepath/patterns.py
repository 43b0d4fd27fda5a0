"""Closed frequent state-transition patterns over decoded sequences.

Patterns are state subsequences (gaps allowed, order preserved); support is
the number of distinct subjects containing the pattern; a pattern is closed
when no super-sequence has the same support. The miner grows frequent
prefixes over first-occurrence projections and applies the bidirectional
closedness test: a pattern is closed iff at every insertion gap the sets of
items occurring inside that gap's maximum period share no common item
across all containing sequences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import EmptyInput
from .hmm.decode import DecodedSubject


@dataclass(frozen=True)
class CollapsedSequence:
    """A subject's Viterbi labels with consecutive duplicates removed."""

    subject_id: str
    states: tuple[int, ...]


@dataclass(frozen=True)
class MinedPattern:
    states: tuple[int, ...]
    support: int

    def to_dict(self) -> dict:
        return {"states": list(self.states), "support": self.support}


def collapse(decoded: DecodedSubject) -> CollapsedSequence:
    labels = decoded.labels
    if not labels:
        raise EmptyInput(f"subject {decoded.subject_id} has no visits")
    states = [labels[0]]
    for s in labels[1:]:
        if s != states[-1]:
            states.append(s)
    return CollapsedSequence(subject_id=decoded.subject_id, states=tuple(states))


def contains_pattern(seq: CollapsedSequence | Sequence[int], pattern: Sequence[int]) -> bool:
    """True iff pattern is a gapped, order-preserving subsequence of seq."""
    states = seq.states if isinstance(seq, CollapsedSequence) else seq
    if len(pattern) == 0:
        raise EmptyInput("pattern must have at least one state")
    it = iter(states)
    return all(any(s == want for s in it) for want in pattern)


def _first_match_end(states: Sequence[int], pattern: Sequence[int], start: int = 0) -> int:
    """End position of the greedy leftmost match, or -1 when absent."""
    pos = start - 1
    for want in pattern:
        pos += 1
        while pos < len(states) and states[pos] != want:
            pos += 1
        if pos >= len(states):
            return -1
    return pos


def _last_match_start(states: Sequence[int], pattern: Sequence[int]) -> int:
    """Start position of the greedy rightmost match, or len(states) when empty."""
    pos = len(states)
    for want in reversed(pattern):
        pos -= 1
        while pos >= 0 and states[pos] != want:
            pos -= 1
        if pos < 0:
            return -1
    return pos


def _is_closed(db: list[tuple[int, ...]], pattern: list[int], seq_ids: list[int]) -> bool:
    """Bidirectional extension check over every insertion gap.

    Gap k sits between pattern[:k] and pattern[k:]; an item common to every
    containing sequence's gap-k maximum period extends the pattern without
    losing support, so the pattern is not closed.
    """
    n = len(pattern)
    for k in range(n + 1):
        prefix, suffix = pattern[:k], pattern[k:]
        common: Optional[set[int]] = None
        for i in seq_ids:
            states = db[i]
            lo = _first_match_end(states, prefix) if prefix else -1
            hi = _last_match_start(states, suffix) if suffix else len(states)
            items = set(states[lo + 1 : hi])
            common = items if common is None else common & items
            if not common:
                break
        if common:
            return False
    return True


def mine_patterns(
    seqs: Sequence[CollapsedSequence],
    min_support: int,
    top_n: Optional[int] = 50,
) -> list[MinedPattern]:
    """All closed patterns of length >= 2 with support >= min_support.

    A subject counts at most once per pattern. Results sort by support
    descending, ties by lexicographic state sequence; ``top_n`` (default 50)
    truncates the ranked list, ``None`` disables truncation.
    """
    if not seqs:
        raise EmptyInput("no sequences to mine")
    if min_support < 1:
        raise ValueError("min_support must be >= 1")
    db = [tuple(s.states) for s in seqs]
    found: list[MinedPattern] = []

    def grow(pattern: list[int], matches: list[tuple[int, int]]) -> None:
        if len(pattern) >= 2 and _is_closed(db, pattern, [i for i, _ in matches]):
            found.append(MinedPattern(states=tuple(pattern), support=len(matches)))
        # project: first occurrence of each item after the current match end
        occurrences: dict[int, list[tuple[int, int]]] = {}
        for i, end in matches:
            states = db[i]
            seen: set[int] = set()
            for pos in range(end + 1, len(states)):
                item = states[pos]
                if item not in seen:
                    seen.add(item)
                    occurrences.setdefault(item, []).append((i, pos))
        for item in sorted(occurrences):
            next_matches = occurrences[item]
            if len(next_matches) >= min_support:
                pattern.append(item)
                grow(pattern, next_matches)
                pattern.pop()

    grow([], [(i, -1) for i in range(len(db))])
    found.sort(key=lambda p: (-p.support, p.states))
    return found if top_n is None else found[:top_n]


def collapse_all(decoded: Sequence[DecodedSubject], collapse_runs: bool = True) -> list[CollapsedSequence]:
    """Per-subject sequences for mining; raw label sequences when disabled."""
    if collapse_runs:
        return [collapse(d) for d in decoded]
    return [CollapsedSequence(subject_id=d.subject_id, states=tuple(d.labels)) for d in decoded]
