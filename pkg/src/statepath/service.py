"""HTTP JSON API over a single-workspace engine instance.

One process owns one dataset, a set of trained models with one active at a
time, a decoded cache, and a persisted subgroup store. Reads are served
from immutable snapshots; mutations (ingest, train completion, activation,
subgroup writes) serialize through a single lock.
"""

from __future__ import annotations

import os
import threading
import uuid
from typing import Optional

from fastapi import Body, FastAPI, File, Query, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import analytics, layout
from .data import Dataset, ingest_csv, schema_from_dict, summarize
from .errors import (
    EmptyQuery,
    EmptyScope,
    EngineError,
    InvalidFilterAST,
    MalformedRow,
    NonNumericValue,
    SubjectWithNoVisits,
    UnknownEvent,
    UnknownState,
    UnknownSubgroup,
    UnknownVariable,
)
from .hmm import HmmConfig, HmmModel, cross_validate, decode, mask_from_name, train
from .query import EvalContext, describe, filter_from_dict, match_sequence, query_from_dict
from .subgroups import SubgroupStore


class NoActiveModel(EngineError):
    """A state-dependent endpoint was called without an active model."""


class NoDataset(EngineError):
    """The workspace has no ingested dataset yet."""


def default_emissions(ds: Dataset) -> dict[str, str]:
    out = {}
    for var in ds.variables(role="dynamic-observed"):
        out[var.name] = "bernoulli" if var.kind == "binary" else "gaussian"
    return out


def config_from_request(ds: Dataset, doc: dict) -> HmmConfig:
    n_states = int(doc["n_states"])
    emissions = doc.get("emissions") or default_emissions(ds)
    mask_doc = doc.get("transition_mask")
    mask_name = doc.get("mask")
    if mask_doc is not None:
        mask = tuple(tuple(int(x) for x in row) for row in mask_doc)
    elif mask_name:
        mask = tuple(tuple(int(x) for x in row) for row in mask_from_name(mask_name, n_states))
    else:
        mask = None
    return HmmConfig(
        n_states=n_states,
        emissions=emissions,
        time_unit=float(doc.get("time_unit", 1.0)),
        transition_mask=mask,
        restarts=int(doc.get("restarts", 5)),
        seed=int(doc.get("seed", 0)),
        max_iters=int(doc.get("max_iters", 500)),
        rel_tol=float(doc.get("rel_tol", 1e-6)),
        variance_floor=float(doc.get("variance_floor", 1e-4)),
    )


class Workspace:
    def __init__(self, data_dir: str, workspace_file: Optional[str] = None):
        self.data_dir = data_dir
        os.makedirs(data_dir, exist_ok=True)
        store_path = workspace_file or os.path.join(data_dir, "subgroups.json")
        self.lock = threading.Lock()
        self.dataset: Optional[Dataset] = None
        self.models: dict[str, HmmModel] = {}
        self.active_model_id: Optional[str] = None
        self.decoded_cache: dict[str, list] = {}
        self.subgroups = SubgroupStore(store_path)
        self.jobs: dict[str, dict] = {}
        self._model_counter = 0

    # --- snapshots -------------------------------------------------------

    def require_dataset(self) -> Dataset:
        ds = self.dataset
        if ds is None:
            raise NoDataset("ingest a dataset first")
        return ds

    def require_active(self) -> tuple[str, HmmModel, Dataset]:
        ds = self.require_dataset()
        if self.active_model_id is None:
            raise NoActiveModel("no active model; train and activate one")
        return self.active_model_id, self.models[self.active_model_id], ds

    def decoded(self) -> list:
        model_id, model, ds = self.require_active()
        cached = self.decoded_cache.get(model_id)
        if cached is None:
            cached = decode(model, ds)
            with self.lock:
                self.decoded_cache[model_id] = cached
        return cached

    def context(self) -> EvalContext:
        return EvalContext(ds=self.require_dataset(), decoded=self.decoded())

    def scope_of(self, subgroup_id: Optional[str]) -> Optional[set[str]]:
        if subgroup_id is None or subgroup_id == "":
            return None
        return set(self.subgroups.get(subgroup_id).members)

    # --- mutations -------------------------------------------------------

    def install_dataset(self, ds: Dataset) -> None:
        with self.lock:
            self.dataset = ds
            self.decoded_cache = {}
        self._refresh_subgroups()

    def add_model(self, model: HmmModel) -> str:
        with self.lock:
            self._model_counter += 1
            model_id = f"model-{self._model_counter}"
            self.models[model_id] = model
            if self.active_model_id is None:
                self.active_model_id = model_id
        if self.active_model_id == model_id:
            self._refresh_subgroups()
        return model_id

    def activate(self, model_id: str) -> None:
        if model_id not in self.models:
            raise KeyError(model_id)
        with self.lock:
            self.active_model_id = model_id
        self._refresh_subgroups()

    def _refresh_subgroups(self) -> None:
        if len(self.subgroups) == 0:
            return
        try:
            ctx = self.context()
        except (NoDataset, NoActiveModel):
            ctx = EvalContext(ds=self.dataset, decoded=[]) if self.dataset else None
        if ctx is not None:
            with self.lock:
                self.subgroups.refresh(ctx)


def _error_response(status: int, exc: Exception, **extra) -> JSONResponse:
    payload = {"detail": str(exc), "error": type(exc).__name__}
    payload.update(extra)
    return JSONResponse(status_code=status, content=payload)


def create_app(workspace: Workspace) -> FastAPI:
    app = FastAPI(title="statepath", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    ws = workspace

    @app.exception_handler(EngineError)
    async def engine_error_handler(_, exc: EngineError):
        if isinstance(exc, (MalformedRow, NonNumericValue, UnknownVariable, SubjectWithNoVisits)):
            extra = {"line": exc.line} if hasattr(exc, "line") else {}
            return _error_response(400, exc, **extra)
        if isinstance(exc, UnknownSubgroup):
            return _error_response(404, exc)
        if isinstance(exc, (NoActiveModel, NoDataset)):
            return _error_response(409, exc)
        if isinstance(exc, InvalidFilterAST):
            return _error_response(422, exc, path=exc.path)
        if isinstance(exc, (UnknownState, UnknownEvent, EmptyQuery, EmptyScope)):
            return _error_response(422, exc)
        return _error_response(422, exc)

    @app.exception_handler(KeyError)
    async def key_error_handler(_, exc: KeyError):
        return _error_response(404, exc)

    # --- datasets ---------------------------------------------------------

    @app.post("/datasets")
    async def post_dataset(
        visits: UploadFile = File(...),
        statics: UploadFile = File(...),
        events: UploadFile = File(...),
        schema_file: UploadFile = File(..., alias="schema"),
    ):
        import json as _json

        paths = {}
        for name, upload in (("visits", visits), ("statics", statics), ("events", events)):
            path = os.path.join(ws.data_dir, f"{name}.csv")
            with open(path, "wb") as fh:
                fh.write(await upload.read())
            paths[name] = path
        schema_doc = _json.loads((await schema_file.read()).decode("utf-8"))
        schema_path = os.path.join(ws.data_dir, "schema.json")
        with open(schema_path, "w", encoding="utf-8") as fh:
            _json.dump(schema_doc, fh)
        ds = ingest_csv(paths["visits"], paths["statics"], paths["events"], schema_from_dict(schema_doc))
        ws.install_dataset(ds)
        return summarize(ds).to_dict()

    @app.get("/datasets/current")
    def get_dataset():
        ds = ws.require_dataset()
        doc = summarize(ds).to_dict()
        doc["subject_ids"] = ds.subject_ids
        doc["schema"] = [{"name": v.name, "kind": v.kind, "role": v.role} for v in ds.schema]
        return doc

    # --- models and jobs ---------------------------------------------------

    @app.post("/models/train")
    def post_train(body: dict = Body(...)):
        ds = ws.require_dataset()
        cfg = config_from_request(ds, body)
        job_id = uuid.uuid4().hex[:12]
        ws.jobs[job_id] = {"status": "running", "model_id": None, "error": None}

        def run():
            try:
                model = train(ds, cfg)
                model_id = ws.add_model(model)
                ws.jobs[job_id].update(status="done", model_id=model_id)
            except Exception as exc:  # surfaced through the job resource
                ws.jobs[job_id].update(status="failed", error=str(exc))

        threading.Thread(target=run, daemon=True).start()
        return {"job_id": job_id}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        return {"job_id": job_id, **ws.jobs[job_id]}

    @app.post("/models/cv")
    def post_cv(body: dict = Body(...)):
        ds = ws.require_dataset()
        cfgs = [config_from_request(ds, doc) for doc in body["configs"]]
        rows = cross_validate(ds, cfgs, folds=int(body.get("folds", 5)), seed=int(body.get("seed", 0)))
        return {"rows": [r.to_dict() for r in rows]}

    @app.get("/models")
    def get_models():
        return {
            "active_model_id": ws.active_model_id,
            "models": [
                {"id": model_id, "n_states": m.n_states, "train_loglik": m.train_loglik}
                for model_id, m in sorted(ws.models.items())
            ],
        }

    @app.get("/models/{model_id}")
    def get_model(model_id: str):
        return {"id": model_id, **ws.models[model_id].to_dict()}

    @app.post("/models/{model_id}/activate")
    def post_activate(model_id: str):
        ws.activate(model_id)
        return {"active_model_id": model_id}

    # --- decode ------------------------------------------------------------

    @app.get("/decode")
    def get_decode(subject: Optional[list[str]] = Query(default=None)):
        model_id, _, _ = ws.require_active()
        decoded = ws.decoded()
        if subject:
            wanted = set(subject)
            decoded = [d for d in decoded if d.subject_id in wanted]
        return {"model_id": model_id, "subjects": [d.to_dict() for d in decoded]}

    # --- aggregations -------------------------------------------------------

    @app.get("/summary/features")
    def get_features(subgroup: Optional[str] = None):
        model_id, _, ds = ws.require_active()
        result = analytics.feature_summary(ws.decoded(), ds, ws.scope_of(subgroup))
        return {"model_id": model_id, "subgroup": subgroup, **result}

    @app.get("/chord")
    def get_chord(subgroup: Optional[str] = None):
        model_id, _, _ = ws.require_active()
        result = analytics.chord_matrix(ws.decoded(), ws.scope_of(subgroup))
        return {"model_id": model_id, "subgroup": subgroup, **result}

    @app.get("/pathways/visit")
    def get_pathways_visit(anchor: Optional[int] = None, subgroup: Optional[str] = None):
        model_id, _, _ = ws.require_active()
        result = analytics.sankey_by_visit(ws.decoded(), ws.scope_of(subgroup), anchor)
        return {"model_id": model_id, "subgroup": subgroup, **result}

    @app.get("/pathways/time")
    def get_pathways_time(bin: float = analytics.DEFAULT_TIME_BIN, subgroup: Optional[str] = None):
        model_id, _, _ = ws.require_active()
        result = analytics.sankey_by_time(ws.decoded(), ws.scope_of(subgroup), bin)
        return {"model_id": model_id, "subgroup": subgroup, **result}

    @app.get("/pathways/bipartite")
    def get_pathways_bipartite(event: str, subgroup: Optional[str] = None):
        model_id, _, ds = ws.require_active()
        result = analytics.bipartite_sankey(ws.decoded(), ds, event, ws.scope_of(subgroup))
        return {"model_id": model_id, "subgroup": subgroup, **result}

    @app.get("/pathways/waterfall")
    def get_pathways_waterfall(subgroup: Optional[str] = None):
        model_id, _, _ = ws.require_active()
        result = layout.waterfall(ws.decoded(), ws.scope_of(subgroup))
        return {"model_id": model_id, "subgroup": subgroup, **result}

    @app.get("/kde")
    def get_kde(event: str, subgroup: Optional[str] = None):
        ds = ws.require_dataset()
        ages = analytics.event_ages(ds, event)
        if not ages:
            return {"event": event, "population": None, "subgroup_curve": None, "subgroup": subgroup}
        grid = analytics.default_kde_grid(ages)
        population = analytics.kde(ages, grid)
        scope = ws.scope_of(subgroup)
        subgroup_curve = None
        if scope is not None:
            scoped_ages = analytics.event_ages(ds, event, scope)
            if scoped_ages:
                subgroup_curve = analytics.kde(scoped_ages, grid)
        return {
            "event": event,
            "model_id": ws.active_model_id,
            "subgroup": subgroup,
            "population": population,
            "subgroup_curve": subgroup_curve,
        }

    @app.get("/patterns")
    def get_patterns(
        min_support: int = 2,
        top: int = 50,
        subgroup: Optional[str] = None,
        collapse_runs: bool = True,
    ):
        from .patterns import collapse_all, mine_patterns

        model_id, _, _ = ws.require_active()
        decoded = ws.decoded()
        scope = ws.scope_of(subgroup)
        if scope is not None:
            decoded = [d for d in decoded if d.subject_id in scope]
        seqs = collapse_all(decoded, collapse_runs)
        mined = mine_patterns(seqs, min_support, top) if seqs else []
        return {
            "model_id": model_id,
            "subgroup": subgroup,
            "min_support": min_support,
            "top": top,
            "patterns": [p.to_dict() for p in mined],
        }

    # --- queries and subgroups ----------------------------------------------

    @app.post("/query")
    def post_query(body: dict = Body(...)):
        model_id, _, _ = ws.require_active()
        q = query_from_dict(body)
        matched = sorted(d.subject_id for d in ws.decoded() if match_sequence(d, q))
        return {"model_id": model_id, "subject_ids": matched}

    @app.post("/subgroups")
    def post_subgroup(body: dict = Body(...)):
        name = str(body.get("name", "subgroup"))
        filter_expr = filter_from_dict(body["filter"])
        ctx = ws.context() if ws.active_model_id else EvalContext(ds=ws.require_dataset(), decoded=[])
        group = ws.subgroups.create(name, filter_expr, ctx)
        doc = group.to_dict()
        doc["description"] = describe(group.filter)
        return doc

    @app.get("/subgroups")
    def get_subgroups():
        return {
            "subgroups": [
                {**g.to_dict(), "member_count": len(g.members), "description": describe(g.filter)}
                for g in ws.subgroups.list()
            ]
        }

    @app.get("/subgroups/export")
    def export_subgroups():
        return ws.subgroups.to_doc()

    @app.post("/subgroups/import")
    def import_subgroups(body: dict = Body(...)):
        imported = ws.subgroups.import_doc(body)
        return {"imported": [g.to_dict() for g in imported]}

    @app.post("/subgroups/import-static")
    def import_static(body: dict = Body(...)):
        ctx = ws.context() if ws.active_model_id else EvalContext(ds=ws.require_dataset(), decoded=[])
        groups = ws.subgroups.import_from_static(str(body["var"]), ctx)
        return {"subgroups": [g.to_dict() for g in groups]}

    @app.get("/subgroups/{subgroup_id}")
    def get_subgroup(subgroup_id: str):
        g = ws.subgroups.get(subgroup_id)
        return {**g.to_dict(), "member_count": len(g.members), "description": describe(g.filter)}

    @app.patch("/subgroups/{subgroup_id}")
    def patch_subgroup(subgroup_id: str, body: dict = Body(...)):
        g = ws.subgroups.rename(subgroup_id, str(body["name"]))
        return g.to_dict()

    @app.delete("/subgroups/{subgroup_id}")
    def delete_subgroup(subgroup_id: str):
        ws.subgroups.delete(subgroup_id)
        return {"deleted": subgroup_id}

    return app


def serve(data_dir: str, port: int, workspace_file: Optional[str] = None, host: str = "127.0.0.1") -> None:
    import uvicorn

    app = create_app(Workspace(data_dir, workspace_file))
    uvicorn.run(app, host=host, port=port, log_level="warning")
