"""Named, persisted subject subgroups built from filter expressions.

The store keeps each subgroup's filter AST plus a materialized member set;
``refresh`` recomputes members after the dataset or active model changes.
Persistence is a versioned JSON file written atomically.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import Optional

from .errors import UnknownSubgroup, UnknownVariable
from .jsonio import canonical_dumps, atomic_write_text, read_json
from .query import And, EvalContext, FilterExpr, StaticEquals, evaluate, filter_from_dict, filter_to_dict

STORE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Subgroup:
    id: str
    name: str  # free text, duplicates allowed; ids disambiguate
    filter: FilterExpr
    members: tuple[str, ...]  # sorted subject ids
    created_at: str

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "filter": filter_to_dict(self.filter),
            "members": list(self.members),
            "created_at": self.created_at,
        }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class SubgroupStore:
    """CRUD over subgroups with optional on-disk persistence."""

    def __init__(self, path: Optional[str] = None):
        self._path = path
        self._groups: dict[str, Subgroup] = {}
        self._counter = 0
        if path is not None:
            try:
                self._load(read_json(path))
            except FileNotFoundError:
                pass

    def __len__(self) -> int:
        return len(self._groups)

    def list(self) -> list[Subgroup]:
        return sorted(self._groups.values(), key=lambda g: g.id)

    def get(self, subgroup_id: str) -> Subgroup:
        try:
            return self._groups[subgroup_id]
        except KeyError:
            raise UnknownSubgroup(subgroup_id) from None

    def create(self, name: str, filter_expr: FilterExpr, ctx: EvalContext) -> Subgroup:
        self._counter += 1
        group = Subgroup(
            id=f"sg-{self._counter}",
            name=name,
            filter=filter_expr,
            members=tuple(sorted(evaluate(ctx, filter_expr))),
            created_at=_now(),
        )
        self._groups[group.id] = group
        self._save()
        return group

    def rename(self, subgroup_id: str, name: str) -> Subgroup:
        group = replace(self.get(subgroup_id), name=name)
        self._groups[subgroup_id] = group
        self._save()
        return group

    def delete(self, subgroup_id: str) -> None:
        self.get(subgroup_id)
        del self._groups[subgroup_id]
        self._save()

    def refresh(self, ctx: EvalContext) -> None:
        """Recompute every member set from the stored ASTs."""
        for gid, group in list(self._groups.items()):
            self._groups[gid] = replace(group, members=tuple(sorted(evaluate(ctx, group.filter))))
        self._save()

    def import_from_static(self, var: str, ctx: EvalContext) -> list[Subgroup]:
        """One subgroup per distinct non-missing value of a static variable."""
        schema_var = ctx.ds.variable(var)
        if schema_var.role != "static":
            raise UnknownVariable(f"{var!r} is not a static variable")
        values = sorted({s.statics[var] for s in ctx.ds.subjects if var in s.statics})
        return [self.create(f"{var}={value}", StaticEquals(var=var, value=value), ctx) for value in values]

    # --- persistence ----------------------------------------------------

    def to_doc(self) -> dict:
        return {
            "version": STORE_FORMAT_VERSION,
            "counter": self._counter,
            "subgroups": [g.to_dict() for g in self.list()],
        }

    def _load(self, doc: dict) -> None:
        if doc.get("version") != STORE_FORMAT_VERSION:
            raise ValueError(f"unsupported subgroup store version {doc.get('version')!r}")
        self._counter = int(doc.get("counter", 0))
        for entry in doc["subgroups"]:
            group = Subgroup(
                id=entry["id"],
                name=entry["name"],
                filter=filter_from_dict(entry["filter"]),
                members=tuple(entry["members"]),
                created_at=entry["created_at"],
            )
            self._groups[group.id] = group

    def import_doc(self, doc: dict) -> list[Subgroup]:
        """Merge an exported store; imported groups get fresh ids."""
        if doc.get("version") != STORE_FORMAT_VERSION:
            raise ValueError(f"unsupported subgroup store version {doc.get('version')!r}")
        imported = []
        for entry in doc["subgroups"]:
            self._counter += 1
            group = Subgroup(
                id=f"sg-{self._counter}",
                name=entry["name"],
                filter=filter_from_dict(entry["filter"]),
                members=tuple(entry["members"]),
                created_at=entry.get("created_at", _now()),
            )
            self._groups[group.id] = group
            imported.append(group)
        self._save()
        return imported

    def _save(self) -> None:
        if self._path is not None:
            atomic_write_text(self._path, canonical_dumps(self.to_doc()))


def match_all() -> FilterExpr:
    return And(filters=())
