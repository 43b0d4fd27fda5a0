"""Subgroup CRUD, persistence, and refresh semantics."""

import json

from statepath.errors import UnknownSubgroup
from statepath.hmm.decode import DecodedSubject, DecodedVisit
from statepath.query import And, EvalContext, StateAtTime, StaticEquals, filter_to_dict
from statepath.subgroups import SubgroupStore

import pytest

from conftest import binary_dataset


def ctx_with_labels(label_map):
    ds = binary_dataset(
        [
            ("S1", [0.0, 6.0], [[1.0], [0.0]], {"SEX": "F"}),
            ("S2", [0.0, 6.0], [[0.0], [1.0]], {"SEX": "M"}),
            ("S3", [0.0], [[1.0]], {"SEX": "F"}),
            ("S4", [0.0], [[0.0]], {}),
        ],
        n_vars=1,
        statics_schema=("SEX",),
    )
    decoded = []
    for sid, labels in label_map.items():
        subject = ds.subject(sid)
        visits = tuple(
            DecodedVisit(age=v.age, state=s, posterior=tuple(1.0 if i == s else 0.0 for i in range(3)))
            for v, s in zip(subject.visits, labels)
        )
        decoded.append(DecodedSubject(subject_id=sid, visits=visits, loglik=0.0))
    return EvalContext(ds=ds, decoded=decoded)


def test_create_rename_delete(tmp_path):
    ctx = ctx_with_labels({"S1": [0, 1], "S2": [1, 2], "S3": [0], "S4": [2]})
    store = SubgroupStore(str(tmp_path / "subgroups.json"))
    g = store.create("females", StaticEquals(var="SEX", value="F"), ctx)
    assert g.members == ("S1", "S3")
    g2 = store.rename(g.id, "F subjects")
    assert g2.name == "F subjects"
    # duplicate names allowed; ids disambiguate
    other = store.create("F subjects", And(()), ctx)
    assert other.id != g.id
    store.delete(other.id)
    with pytest.raises(UnknownSubgroup):
        store.get(other.id)


def test_import_from_static_partitions(tmp_path):
    ctx = ctx_with_labels({})
    store = SubgroupStore()
    groups = store.import_from_static("SEX", ctx)
    assert [g.name for g in groups] == ["SEX=F", "SEX=M"]
    members = sorted(m for g in groups for m in g.members)
    assert members == ["S1", "S2", "S3"]  # S4 has no SEX value
    assert set(groups[0].members) & set(groups[1].members) == set()


def test_export_import_round_trip(tmp_path):
    ctx = ctx_with_labels({"S1": [0, 1], "S2": [1, 2], "S3": [0], "S4": [2]})
    store = SubgroupStore(str(tmp_path / "store.json"))
    store.create("s1-like", StateAtTime(state=0, time_window=(0.0, None)), ctx)
    doc = store.to_doc()

    fresh = SubgroupStore()
    imported = fresh.import_doc(json.loads(json.dumps(doc)))
    assert len(imported) == 1
    assert filter_to_dict(imported[0].filter) == filter_to_dict(store.list()[0].filter)
    assert imported[0].members == store.list()[0].members


def test_refresh_recomputes_members(tmp_path):
    ctx1 = ctx_with_labels({"S1": [0, 1], "S2": [1, 2], "S3": [0], "S4": [2]})
    store = SubgroupStore()
    g = store.create("in state 0", StateAtTime(state=0, time_window=(0.0, None)), ctx1)
    assert g.members == ("S1", "S3")
    # a new decoding flips labels; stored AST re-evaluates
    ctx2 = ctx_with_labels({"S1": [2, 1], "S2": [0, 2], "S3": [1], "S4": [0]})
    store.refresh(ctx2)
    assert store.get(g.id).members == ("S2", "S4")


def test_store_persists_across_instances(tmp_path):
    path = str(tmp_path / "persist.json")
    ctx = ctx_with_labels({})
    store = SubgroupStore(path)
    g = store.create("everyone", And(()), ctx)
    again = SubgroupStore(path)
    assert [x.id for x in again.list()] == [g.id]
    assert again.get(g.id).members == g.members
    # counter continues, no id collisions
    h = again.create("more", And(()), ctx)
    assert h.id != g.id
