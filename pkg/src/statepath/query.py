"""Temporal state-sequence queries and conjunctive subject filters.

A sequence query is an ordered list of node constraints joined by edge
constraints; it matches a subject when some strictly time-increasing
assignment of nodes to visits satisfies every constraint. Filters compose
by conjunction only and evaluate to subject-id sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .data import Dataset
from .errors import EmptyQuery, InvalidFilterAST, UnknownState, UnknownVariable
from .hmm.decode import DecodedSubject
from .patterns import collapse, contains_pattern

NODE_AT = ("begin", "end", "any")
EDGE_ORDERS = ("next-visit", "eventually")


@dataclass(frozen=True)
class NodeConstraint:
    state: int
    time_window: tuple[float, Optional[float]] = (0.0, None)  # None = unbounded
    node_at: str = "any"
    min_posterior: float = 0.0

    def __post_init__(self):
        if self.state < 0:
            raise ValueError("state must be >= 0")
        lo, hi = self.time_window
        if hi is not None and lo > hi:
            raise ValueError("time_window min must be <= max")
        if self.node_at not in NODE_AT:
            raise ValueError(f"node_at must be one of {NODE_AT}")
        if not 0.0 <= self.min_posterior <= 1.0:
            raise ValueError("min_posterior must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "state": self.state,
            "time_window": [self.time_window[0], self.time_window[1]],
            "node_at": self.node_at,
            "min_posterior": self.min_posterior,
        }


@dataclass(frozen=True)
class EdgeConstraint:
    max_gap: Optional[float] = None  # months; None = unbounded
    order: str = "eventually"

    def __post_init__(self):
        if self.max_gap is not None and self.max_gap < 0:
            raise ValueError("max_gap must be >= 0")
        if self.order not in EDGE_ORDERS:
            raise ValueError(f"order must be one of {EDGE_ORDERS}")

    def to_dict(self) -> dict:
        return {"max_gap": self.max_gap, "order": self.order}


@dataclass(frozen=True)
class SequenceQuery:
    nodes: tuple[NodeConstraint, ...]
    edges: tuple[EdgeConstraint, ...] = ()

    def __post_init__(self):
        if not self.nodes:
            raise EmptyQuery("a sequence query needs at least one node")
        if len(self.edges) != len(self.nodes) - 1:
            raise ValueError("edges count must be nodes count - 1")

    def to_dict(self) -> dict:
        return {"nodes": [n.to_dict() for n in self.nodes], "edges": [e.to_dict() for e in self.edges]}


def match_sequence(decoded: DecodedSubject, q: SequenceQuery) -> bool:
    """Backtracking search for a constraint-satisfying visit assignment."""
    visits = decoded.visits
    last = len(visits) - 1

    def node_ok(node: NodeConstraint, i: int) -> bool:
        v = visits[i]
        if v.state != node.state:
            return False
        lo, hi = node.time_window
        if v.age < lo or (hi is not None and v.age > hi):
            return False
        if node.node_at == "begin" and i != 0:
            return False
        if node.node_at == "end" and i != last:
            return False
        return v.posterior[node.state] >= node.min_posterior

    def assign(k: int, prev: int) -> bool:
        if k == len(q.nodes):
            return True
        edge = q.edges[k - 1] if k > 0 else None
        for i in range(prev + 1, len(visits)):
            if edge is not None:
                if edge.order == "next-visit" and i != prev + 1:
                    break  # later visits only widen the gap
                if edge.max_gap is not None and visits[i].age - visits[prev].age > edge.max_gap:
                    break  # ages increase, so every later visit also fails
            if node_ok(q.nodes[k], i) and assign(k + 1, i):
                return True
        return False

    return assign(0, -1)


# --- filter expressions -------------------------------------------------


@dataclass(frozen=True)
class StaticEquals:
    var: str
    value: str


@dataclass(frozen=True)
class StateAtTime:
    state: int
    time_window: tuple[float, Optional[float]] = (0.0, None)


@dataclass(frozen=True)
class Transition:
    from_state: int
    to_state: int
    time_window: tuple[float, Optional[float]] = (0.0, None)  # on the arrival visit

    def __post_init__(self):
        if self.from_state == self.to_state:
            raise ValueError("transition filter needs from_state != to_state")


@dataclass(frozen=True)
class PatternContains:
    states: tuple[int, ...]

    def __post_init__(self):
        if not self.states:
            raise ValueError("pattern must have at least one state")


@dataclass(frozen=True)
class SequenceMatches:
    query: SequenceQuery


@dataclass(frozen=True)
class And:
    filters: tuple["FilterExpr", ...] = ()


FilterExpr = Union[StaticEquals, StateAtTime, Transition, PatternContains, SequenceMatches, And]

MATCH_ALL = And(filters=())


@dataclass
class EvalContext:
    """Dataset plus decoded labels/posteriors for state-dependent filters."""

    ds: Dataset
    decoded: Sequence[DecodedSubject] = ()
    _by_id: dict = field(default_factory=dict)
    _collapsed: dict = field(default_factory=dict)

    def __post_init__(self):
        self._by_id = {d.subject_id: d for d in self.decoded}

    @property
    def n_states(self) -> Optional[int]:
        for d in self.decoded:
            if d.visits:
                return len(d.visits[0].posterior)
        return None

    def decoded_of(self, sid: str) -> Optional[DecodedSubject]:
        return self._by_id.get(sid)

    def collapsed_of(self, sid: str):
        if sid not in self._collapsed:
            dec = self._by_id.get(sid)
            self._collapsed[sid] = collapse(dec) if dec and dec.visits else None
        return self._collapsed[sid]


def _check_state(ctx: EvalContext, state: int) -> None:
    k = ctx.n_states
    if state < 0 or (k is not None and state >= k):
        raise UnknownState(f"state {state} outside [0, {k})")


def _in_window(age: float, window: tuple[float, Optional[float]]) -> bool:
    lo, hi = window
    return age >= lo and (hi is None or age <= hi)


def evaluate(ctx: EvalContext, f: FilterExpr) -> set[str]:
    """Set-semantics evaluation of one filter over all subjects."""
    ids = ctx.ds.subject_ids
    if isinstance(f, And):
        result = set(ids)
        for child in f.filters:
            result &= evaluate(ctx, child)
        return result
    if isinstance(f, StaticEquals):
        var = ctx.ds.variable(f.var)
        if var.role != "static":
            raise UnknownVariable(f"{f.var!r} is not a static variable")
        return {s.id for s in ctx.ds.subjects if s.statics.get(f.var) == f.value}
    if isinstance(f, StateAtTime):
        _check_state(ctx, f.state)
        out = set()
        for sid in ids:
            dec = ctx.decoded_of(sid)
            if dec and any(v.state == f.state and _in_window(v.age, f.time_window) for v in dec.visits):
                out.add(sid)
        return out
    if isinstance(f, Transition):
        _check_state(ctx, f.from_state)
        _check_state(ctx, f.to_state)
        out = set()
        for sid in ids:
            dec = ctx.decoded_of(sid)
            if dec is None:
                continue
            for a, b in zip(dec.visits, dec.visits[1:]):
                if a.state == f.from_state and b.state == f.to_state and _in_window(b.age, f.time_window):
                    out.add(sid)
                    break
        return out
    if isinstance(f, PatternContains):
        for s in f.states:
            _check_state(ctx, s)
        out = set()
        for sid in ids:
            seq = ctx.collapsed_of(sid)
            if seq is not None and contains_pattern(seq, f.states):
                out.add(sid)
        return out
    if isinstance(f, SequenceMatches):
        for node in f.query.nodes:
            _check_state(ctx, node.state)
        out = set()
        for sid in ids:
            dec = ctx.decoded_of(sid)
            if dec is not None and match_sequence(dec, f.query):
                out.add(sid)
        return out
    raise TypeError(f"unknown filter node {type(f).__name__}")


# --- JSON encoding ------------------------------------------------------


def filter_to_dict(f: FilterExpr) -> dict:
    if isinstance(f, StaticEquals):
        return {"type": "static_equals", "var": f.var, "value": f.value}
    if isinstance(f, StateAtTime):
        return {"type": "state_at_time", "state": f.state, "time_window": list(f.time_window)}
    if isinstance(f, Transition):
        return {
            "type": "transition",
            "from_state": f.from_state,
            "to_state": f.to_state,
            "time_window": list(f.time_window),
        }
    if isinstance(f, PatternContains):
        return {"type": "pattern_contains", "states": list(f.states)}
    if isinstance(f, SequenceMatches):
        return {"type": "sequence_matches", "query": f.query.to_dict()}
    if isinstance(f, And):
        return {"type": "and", "filters": [filter_to_dict(c) for c in f.filters]}
    raise TypeError(f"unknown filter node {type(f).__name__}")


def _require(doc: dict, key: str, path: str):
    if not isinstance(doc, dict):
        raise InvalidFilterAST(path, f"expected an object, got {type(doc).__name__}")
    if key not in doc:
        raise InvalidFilterAST(path, f"missing field {key!r}")
    return doc[key]


def _window_from(doc, path: str) -> tuple[float, Optional[float]]:
    if doc is None:
        return (0.0, None)
    if not isinstance(doc, (list, tuple)) or len(doc) != 2:
        raise InvalidFilterAST(path, "time_window must be [min, max]")
    lo = 0.0 if doc[0] is None else float(doc[0])
    hi = None if doc[1] is None else float(doc[1])
    if hi is not None and lo > hi:
        raise InvalidFilterAST(path, "time_window min must be <= max")
    return (lo, hi)


def node_from_dict(doc: dict, path: str = "$") -> NodeConstraint:
    state = _require(doc, "state", path)
    try:
        return NodeConstraint(
            state=int(state),
            time_window=_window_from(doc.get("time_window"), f"{path}.time_window"),
            node_at=doc.get("node_at", "any"),
            min_posterior=float(doc.get("min_posterior", 0.0)),
        )
    except (ValueError, TypeError) as exc:
        raise InvalidFilterAST(path, str(exc)) from None


def edge_from_dict(doc: dict, path: str = "$") -> EdgeConstraint:
    try:
        max_gap = doc.get("max_gap")
        return EdgeConstraint(
            max_gap=None if max_gap is None else float(max_gap),
            order=doc.get("order", "eventually"),
        )
    except (ValueError, TypeError) as exc:
        raise InvalidFilterAST(path, str(exc)) from None


def query_from_dict(doc: dict, path: str = "$") -> SequenceQuery:
    nodes_doc = _require(doc, "nodes", path)
    if not isinstance(nodes_doc, list) or not nodes_doc:
        raise InvalidFilterAST(f"{path}.nodes", "nodes must be a non-empty list")
    nodes = tuple(node_from_dict(n, f"{path}.nodes[{i}]") for i, n in enumerate(nodes_doc))
    edges_doc = doc.get("edges")
    if edges_doc is None:
        edges = tuple(EdgeConstraint() for _ in range(len(nodes) - 1))
    else:
        if not isinstance(edges_doc, list) or len(edges_doc) != len(nodes) - 1:
            raise InvalidFilterAST(f"{path}.edges", "edges count must be nodes count - 1")
        edges = tuple(edge_from_dict(e, f"{path}.edges[{i}]") for i, e in enumerate(edges_doc))
    try:
        return SequenceQuery(nodes=nodes, edges=edges)
    except (ValueError, EmptyQuery) as exc:
        raise InvalidFilterAST(path, str(exc)) from None


def filter_from_dict(doc, path: str = "$") -> FilterExpr:
    kind = _require(doc, "type", path)
    try:
        if kind == "static_equals":
            return StaticEquals(var=str(_require(doc, "var", path)), value=str(_require(doc, "value", path)))
        if kind == "state_at_time":
            return StateAtTime(
                state=int(_require(doc, "state", path)),
                time_window=_window_from(doc.get("time_window"), f"{path}.time_window"),
            )
        if kind == "transition":
            return Transition(
                from_state=int(_require(doc, "from_state", path)),
                to_state=int(_require(doc, "to_state", path)),
                time_window=_window_from(doc.get("time_window"), f"{path}.time_window"),
            )
        if kind == "pattern_contains":
            states = _require(doc, "states", path)
            if not isinstance(states, list) or not states:
                raise InvalidFilterAST(f"{path}.states", "states must be a non-empty list")
            return PatternContains(states=tuple(int(s) for s in states))
        if kind == "sequence_matches":
            return SequenceMatches(query=query_from_dict(_require(doc, "query", path), f"{path}.query"))
        if kind == "and":
            filters = doc.get("filters", [])
            if not isinstance(filters, list):
                raise InvalidFilterAST(f"{path}.filters", "filters must be a list")
            return And(filters=tuple(filter_from_dict(c, f"{path}.filters[{i}]") for i, c in enumerate(filters)))
    except InvalidFilterAST:
        raise
    except (ValueError, TypeError) as exc:
        raise InvalidFilterAST(path, str(exc)) from None
    raise InvalidFilterAST(path, f"unknown filter type {kind!r}")


def describe(f: FilterExpr) -> str:
    """Short human-readable description for subgroup listings."""

    def window_text(window):
        lo, hi = window
        if hi is None:
            return f">= {lo:g}mo" if lo > 0 else "any age"
        return f"{lo:g}-{hi:g}mo"

    if isinstance(f, StaticEquals):
        return f"{f.var} = {f.value}"
    if isinstance(f, StateAtTime):
        return f"state {f.state} at {window_text(f.time_window)}"
    if isinstance(f, Transition):
        return f"transition {f.from_state}->{f.to_state} at {window_text(f.time_window)}"
    if isinstance(f, PatternContains):
        return "pattern " + "->".join(str(s) for s in f.states)
    if isinstance(f, SequenceMatches):
        parts = []
        for i, node in enumerate(f.query.nodes):
            text = f"state {node.state} ({window_text(node.time_window)}"
            if node.node_at != "any":
                text += f", {node.node_at}"
            if node.min_posterior > 0:
                text += f", posterior>={node.min_posterior:g}"
            text += ")"
            if i > 0:
                edge = f.query.edges[i - 1]
                arrow = "=>" if edge.order == "next-visit" else "->"
                if edge.max_gap is not None:
                    arrow += f" [<={edge.max_gap:g}mo]"
                parts.append(arrow)
            parts.append(text)
        return "sequence " + " ".join(parts)
    if isinstance(f, And):
        if not f.filters:
            return "all subjects"
        return " AND ".join(describe(c) for c in f.filters)
    raise TypeError(f"unknown filter node {type(f).__name__}")
