"""Endpoint contracts over a live in-process app."""

import json
import time

import pytest
from fastapi.testclient import TestClient

from statepath.data import export_csv, schema_to_dict
from statepath.hmm import generate
from statepath.jsonio import canonical_dumps
from statepath.service import Workspace, create_app


@pytest.fixture()
def client(tmp_path):
    ws = Workspace(str(tmp_path / "data"))
    app = create_app(ws)
    with TestClient(app) as c:
        yield c


def upload_dataset(client, tmp_path, n_subjects=30, seed=14):
    ds, truth = generate(n_states=3, n_subjects=n_subjects, n_visits=10, seed=seed)
    v, s, e = (str(tmp_path / n) for n in ("v.csv", "s.csv", "e.csv"))
    export_csv(ds, v, s, e)
    files = {
        "visits": ("visits.csv", open(v, "rb"), "text/csv"),
        "statics": ("statics.csv", open(s, "rb"), "text/csv"),
        "events": ("events.csv", open(e, "rb"), "text/csv"),
        "schema": ("schema.json", json.dumps(schema_to_dict(ds.schema)).encode(), "application/json"),
    }
    resp = client.post("/datasets", files=files)
    assert resp.status_code == 200, resp.text
    return ds, truth, resp.json()


def train_and_activate(client, n_states=3, seed=14, restarts=2):
    resp = client.post("/models/train", json={"n_states": n_states, "seed": seed, "restarts": restarts, "mask": "forward"})
    assert resp.status_code == 200, resp.text
    job_id = resp.json()["job_id"]
    for _ in range(600):
        job = client.get(f"/jobs/{job_id}").json()
        if job["status"] != "running":
            break
        time.sleep(0.05)
    assert job["status"] == "done", job
    return job["model_id"]


def test_dataset_upload_and_summary(client, tmp_path):
    ds, _, summary = upload_dataset(client, tmp_path)
    assert summary["subject_count"] == len(ds.subjects)
    current = client.get("/datasets/current").json()
    assert current["subject_count"] == summary["subject_count"]
    assert len(current["subject_ids"]) == summary["subject_count"]


def test_state_endpoints_require_model(client, tmp_path):
    assert client.get("/chord").status_code == 409  # no dataset yet
    upload_dataset(client, tmp_path)
    resp = client.get("/chord")
    assert resp.status_code == 409
    assert "model" in resp.json()["detail"]


def test_malformed_csv_reports_line(client, tmp_path):
    files = {
        "visits": ("visits.csv", b"subject_id,age_months,m1\nS1,1,zebra\n", "text/csv"),
        "statics": ("statics.csv", b"subject_id\n", "text/csv"),
        "events": ("events.csv", b"subject_id,event_name,age_months\n", "text/csv"),
        "schema": (
            "schema.json",
            json.dumps({"version": 1, "variables": [{"name": "m1", "kind": "binary", "role": "dynamic-observed"}]}).encode(),
            "application/json",
        ),
    }
    resp = client.post("/datasets", files=files)
    assert resp.status_code == 400
    assert resp.json()["line"] == 2


def test_train_decode_and_aggregations(client, tmp_path):
    ds, truth, _ = upload_dataset(client, tmp_path)
    model_id = train_and_activate(client)

    models = client.get("/models").json()
    assert models["active_model_id"] == model_id

    decoded = client.get("/decode").json()
    assert decoded["model_id"] == model_id
    assert len(decoded["subjects"]) == len(ds.subjects)
    one = client.get("/decode", params={"subject": ds.subjects[0].id}).json()
    assert len(one["subjects"]) == 1
    posterior = one["subjects"][0]["visits"][0]["posterior"]
    assert sum(posterior) == pytest.approx(1.0, abs=1e-9)

    visit = client.get("/pathways/visit").json()
    first_column = visit["columns"][0]
    assert sum(s["count"] for s in first_column["stacks"]) == len(ds.subjects)

    chord = client.get("/chord").json()
    assert sum(chord["node_sizes"]) == sum(s.n_visits for s in ds.subjects)

    features = client.get("/summary/features").json()
    assert features["model_id"] == model_id
    assert {v["name"] for v in features["variables"]} >= set(truth["variables"])

    bip = client.get("/pathways/bipartite", params={"event": "diagnosis"}).json()
    assert sum(l["count"] for l in bip["links"]) == len(ds.subjects)

    kde = client.get("/kde", params={"event": "diagnosis"}).json()
    assert kde["population"]["n"] > 0

    wf = client.get("/pathways/waterfall").json()
    assert len(wf["dots"]) == sum(s.n_visits for s in ds.subjects)

    patterns = client.get("/patterns", params={"min_support": 2, "top": 50}).json()
    assert all(p["support"] >= 2 for p in patterns["patterns"])
    assert len(patterns["patterns"]) <= 50


def test_query_and_subgroup_flow(client, tmp_path):
    ds, _, _ = upload_dataset(client, tmp_path)
    train_and_activate(client)

    query = {
        "nodes": [
            {"state": 0, "time_window": [0, 80], "node_at": "begin", "min_posterior": 0.75},
            {"state": 2, "time_window": [1, None], "node_at": "end", "min_posterior": 0.75},
        ],
        "edges": [{"max_gap": None, "order": "eventually"}],
    }
    resp = client.post("/query", json=query)
    assert resp.status_code == 200
    matched = resp.json()["subject_ids"]
    assert isinstance(matched, list)

    # subgroup from a filter AST
    body = {"name": "females", "filter": {"type": "static_equals", "var": "SEX", "value": "F"}}
    created = client.post("/subgroups", json=body).json()
    sid = created["id"]
    fetched = client.get(f"/subgroups/{sid}").json()
    assert fetched["members"] == created["members"]
    # stored AST round-trips through canonical JSON byte-identically
    assert canonical_dumps(fetched["filter"]) == canonical_dumps(body["filter"])

    # scoped results are subsets
    full = client.get("/chord").json()
    scoped = client.get("/chord", params={"subgroup": sid}).json()
    assert sum(scoped["node_sizes"]) <= sum(full["node_sizes"])

    scoped_kde = client.get("/kde", params={"event": "diagnosis", "subgroup": sid}).json()
    assert scoped_kde["subgroup_curve"] is None or scoped_kde["subgroup_curve"]["n"] <= scoped_kde["population"]["n"]

    renamed = client.patch(f"/subgroups/{sid}", json={"name": "F"}).json()
    assert renamed["name"] == "F"

    # import from static partitions subjects
    imported = client.post("/subgroups/import-static", json={"var": "SITE"}).json()
    names = [g["name"] for g in imported["subgroups"]]
    assert names == sorted(names)

    exported = client.get("/subgroups/export").json()
    n_before = len(client.get("/subgroups").json()["subgroups"])
    re_imported = client.post("/subgroups/import", json=exported).json()
    assert len(re_imported["imported"]) == n_before

    assert client.delete(f"/subgroups/{sid}").status_code == 200
    assert client.get(f"/subgroups/{sid}").status_code == 404


def test_invalid_filter_ast_path(client, tmp_path):
    upload_dataset(client, tmp_path)
    body = {"name": "bad", "filter": {"type": "and", "filters": [{"type": "transition", "from_state": 1, "to_state": 1}]}}
    resp = client.post("/subgroups", json=body)
    assert resp.status_code == 422
    assert resp.json()["path"] == "$.filters[0]"


def test_activation_swaps_results_atomically(client, tmp_path):
    ds, _, _ = upload_dataset(client, tmp_path)
    first = train_and_activate(client, n_states=2, seed=1)
    chord_first = client.get("/chord").json()
    assert chord_first["model_id"] == first

    resp = client.post("/models/train", json={"n_states": 3, "seed": 2, "restarts": 1, "mask": "forward"})
    job_id = resp.json()["job_id"]
    for _ in range(600):
        job = client.get(f"/jobs/{job_id}").json()
        if job["status"] != "running":
            break
        time.sleep(0.05)
    second = job["model_id"]
    # first model stays active until explicitly swapped
    assert client.get("/chord").json()["model_id"] == first
    client.post(f"/models/{second}/activate")
    after = client.get("/chord").json()
    assert after["model_id"] == second
    assert after["n_states"] == 3

    # repeated identical GETs between mutations agree byte-for-byte
    a = client.get("/pathways/visit").text
    b = client.get("/pathways/visit").text
    assert a == b


def test_cv_endpoint(client, tmp_path):
    upload_dataset(client, tmp_path, n_subjects=20)
    body = {
        "configs": [
            {"n_states": 2, "seed": 3, "restarts": 1, "mask": "forward"},
            {"n_states": 3, "seed": 3, "restarts": 1, "mask": "forward"},
        ],
        "folds": 2,
        "seed": 3,
    }
    resp = client.post("/models/cv", json=body)
    assert resp.status_code == 200
    rows = resp.json()["rows"]
    assert [r["n_states"] for r in rows] == [2, 3]
    assert all(len(r["fold_scores"]) == 2 for r in rows)
