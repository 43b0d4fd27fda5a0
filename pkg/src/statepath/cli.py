"""Batch driver: ingest, train, cross-validate, decode, mine, query, serve.

Every command reads and writes the documented file formats, exits nonzero
with a machine-parsable JSON error on failure, and seeds all randomness.
Artifacts are canonical JSON (sorted keys, shortest-round-trip floats) so
repeated runs with the same seed are byte-identical.
"""

from __future__ import annotations

import functools
import json
import os
import sys

import click

from . import analytics
from .data import export_csv, ingest_csv, schema_from_dict, schema_to_dict, summarize
from .errors import EngineError
from .hmm import (
    HmmConfig,
    HmmModel,
    cross_validate,
    decode,
    decoded_from_dict,
    decoded_to_dict,
    generate,
    mask_from_name,
    train,
)
from .jsonio import canonical_dumps, read_json, write_canonical
from .layout import waterfall
from .patterns import collapse_all, mine_patterns
from .query import EvalContext, match_sequence, query_from_dict
from .service import default_emissions
from .subgroups import SubgroupStore

DATA_DIR_ENV = "DPVIS_DATA_DIR"


def data_dir_option(fn):
    return click.option(
        "--data-dir",
        envvar=DATA_DIR_ENV,
        default="data",
        show_default=True,
        help=f"Directory with visits.csv, statics.csv, events.csv, schema.json (env {DATA_DIR_ENV}).",
    )(fn)


def engine_errors(fn):
    """Exit nonzero with a JSON error document on any module error."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except EngineError as exc:
            click.echo(canonical_dumps({"error": type(exc).__name__, "detail": str(exc)}), err=True, nl=False)
            sys.exit(1)

    return wrapper


def load_dataset(data_dir: str):
    schema = schema_from_dict(read_json(os.path.join(data_dir, "schema.json")))
    return ingest_csv(
        os.path.join(data_dir, "visits.csv"),
        os.path.join(data_dir, "statics.csv"),
        os.path.join(data_dir, "events.csv"),
        schema,
    )


def build_config(ds, states, mask, restarts, seed, time_unit, max_iters, rel_tol) -> HmmConfig:
    return HmmConfig(
        n_states=states,
        emissions=default_emissions(ds),
        time_unit=time_unit,
        transition_mask=tuple(tuple(int(x) for x in row) for row in mask_from_name(mask, states)),
        restarts=restarts,
        seed=seed,
        max_iters=max_iters,
        rel_tol=rel_tol,
    )


def parse_states_range(text: str) -> list[int]:
    """Accepts '3', '2..20', or '2,5,8'."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    if "," in text:
        return [int(x) for x in text.split(",")]
    return [int(text)]


@click.group()
def main():
    """Disease-progression state analytics over longitudinal visit records."""


@main.command()
@click.option("--states", default=3, show_default=True, help="Number of generating states.")
@click.option("--subjects", default=200, show_default=True)
@click.option("--visits", default=20, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--missing-rate", default=0.2, show_default=True)
@click.option("--mask", default="forward", type=click.Choice(["forward", "full"]), show_default=True)
@click.option("--out-dir", default="data", show_default=True)
@engine_errors
def synth(states, subjects, visits, seed, missing_rate, mask, out_dir):
    """Generate a synthetic cohort from a known model."""
    ds, truth = generate(
        n_states=states,
        n_subjects=subjects,
        n_visits=visits,
        seed=seed,
        missing_rate=missing_rate,
        mask=mask,
    )
    os.makedirs(out_dir, exist_ok=True)
    export_csv(
        ds,
        os.path.join(out_dir, "visits.csv"),
        os.path.join(out_dir, "statics.csv"),
        os.path.join(out_dir, "events.csv"),
    )
    write_canonical(os.path.join(out_dir, "schema.json"), schema_to_dict(ds.schema))
    write_canonical(os.path.join(out_dir, "truth.json"), truth)
    click.echo(canonical_dumps(summarize(ds).to_dict()), nl=False)


@main.command()
@data_dir_option
@engine_errors
def ingest(data_dir):
    """Validate the CSV export and print its summary."""
    ds = load_dataset(data_dir)
    click.echo(canonical_dumps(summarize(ds).to_dict()), nl=False)


@main.command()
@data_dir_option
@click.option("--states", default=3, show_default=True)
@click.option("--mask", default="full", type=click.Choice(["full", "forward"]), show_default=True)
@click.option("--restarts", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--time-unit", default=1.0, show_default=True)
@click.option("--max-iters", default=500, show_default=True)
@click.option("--rel-tol", default=1e-6, show_default=True)
@click.option("--out", default="model.json", show_default=True)
@engine_errors
def train_cmd(data_dir, states, mask, restarts, seed, time_unit, max_iters, rel_tol, out):
    """Fit a constrained model with seeded EM restarts."""
    ds = load_dataset(data_dir)
    cfg = build_config(ds, states, mask, restarts, seed, time_unit, max_iters, rel_tol)
    model = train(ds, cfg)
    write_canonical(out, model.to_dict())
    click.echo(canonical_dumps({"out": out, "train_loglik": model.train_loglik, "n_states": states}), nl=False)


@main.command()
@data_dir_option
@click.option("--states", default="2..20", show_default=True, help="Range '2..20' or list '2,5,8'.")
@click.option("--folds", default=5, show_default=True)
@click.option("--mask", default="full", type=click.Choice(["full", "forward"]), show_default=True)
@click.option("--restarts", default=2, show_default=True, help="Restarts per fold fit.")
@click.option("--seed", default=0, show_default=True)
@click.option("--time-unit", default=1.0, show_default=True)
@click.option("--max-iters", default=500, show_default=True)
@click.option("--out", default="cv.json", show_default=True)
@engine_errors
def cv(data_dir, states, folds, mask, restarts, seed, time_unit, max_iters, out):
    """Cross-validate held-out log-likelihood over a range of state counts."""
    ds = load_dataset(data_dir)
    cfgs = [
        build_config(ds, k, mask, restarts, seed, time_unit, max_iters, 1e-6)
        for k in parse_states_range(states)
    ]
    rows = cross_validate(ds, cfgs, folds=folds, seed=seed)
    doc = {"folds": folds, "seed": seed, "rows": [r.to_dict() for r in rows]}
    write_canonical(out, doc)
    click.echo(canonical_dumps(doc), nl=False)


@main.command(name="decode")
@data_dir_option
@click.option("--model", "model_file", default="model.json", show_default=True)
@click.option("--out", default="decoded.json", show_default=True)
@engine_errors
def decode_cmd(data_dir, model_file, out):
    """Decode per-visit state labels and posteriors for every subject."""
    ds = load_dataset(data_dir)
    model = HmmModel.from_dict(read_json(model_file))
    decoded = decode(model, ds)
    write_canonical(out, decoded_to_dict(decoded))
    click.echo(canonical_dumps({"out": out, "subjects": len(decoded)}), nl=False)


@main.command()
@click.option("--decoded", "decoded_file", default="decoded.json", show_default=True)
@click.option("--min-support", default=2, show_default=True)
@click.option("--top", default=50, show_default=True)
@click.option("--collapse/--no-collapse", "collapse_runs", default=True, show_default=True)
@click.option("--out", default="patterns.json", show_default=True)
@engine_errors
def mine(decoded_file, min_support, top, collapse_runs, out):
    """Mine closed frequent transition patterns from decoded sequences."""
    decoded = decoded_from_dict(read_json(decoded_file))
    seqs = collapse_all(decoded, collapse_runs)
    mined = mine_patterns(seqs, min_support, top)
    doc = {"min_support": min_support, "top": top, "patterns": [p.to_dict() for p in mined]}
    write_canonical(out, doc)
    click.echo(canonical_dumps(doc), nl=False)


@main.command()
@click.option("--file", "query_file", required=True, help="SequenceQuery JSON document.")
@click.option("--decoded", "decoded_file", default="decoded.json", show_default=True)
@click.option("--out", default=None, help="Optional output file for the match list.")
@engine_errors
def query(query_file, decoded_file, out):
    """Run a state-sequence query; print matching subject ids."""
    q = query_from_dict(read_json(query_file))
    decoded = decoded_from_dict(read_json(decoded_file))
    matched = sorted(d.subject_id for d in decoded if match_sequence(d, q))
    doc = {"subject_ids": matched, "count": len(matched)}
    if out:
        write_canonical(out, doc)
    click.echo(canonical_dumps(doc), nl=False)


@main.command(name="export-aggregates")
@data_dir_option
@click.option("--decoded", "decoded_file", default="decoded.json", show_default=True)
@click.option("--subgroup", default=None, help="Scope to a subgroup id from --subgroups-file.")
@click.option("--subgroups-file", default=None)
@click.option("--bin", "bin_months", default=12.0, show_default=True)
@click.option("--anchor", default=None, type=int)
@click.option("--out-dir", default="aggregates", show_default=True)
@engine_errors
def export_aggregates(data_dir, decoded_file, subgroup, subgroups_file, bin_months, anchor, out_dir):
    """Write every view aggregation as canonical JSON files."""
    ds = load_dataset(data_dir)
    decoded = decoded_from_dict(read_json(decoded_file))
    scope = None
    if subgroup is not None:
        store = SubgroupStore(subgroups_file)
        scope = set(store.get(subgroup).members)
    os.makedirs(out_dir, exist_ok=True)

    write_canonical(os.path.join(out_dir, "features.json"), analytics.feature_summary(decoded, ds, scope))
    write_canonical(os.path.join(out_dir, "chord.json"), analytics.chord_matrix(decoded, scope))
    write_canonical(
        os.path.join(out_dir, "sankey_visit.json"), analytics.sankey_by_visit(decoded, scope, anchor)
    )
    write_canonical(
        os.path.join(out_dir, "sankey_time.json"), analytics.sankey_by_time(decoded, scope, bin_months)
    )
    for event in [v.name for v in ds.variables(role="outcome-event")]:
        write_canonical(
            os.path.join(out_dir, f"bipartite_{event}.json"),
            analytics.bipartite_sankey(decoded, ds, event, scope),
        )
        ages = analytics.event_ages(ds, event, scope)
        if ages:
            curve = analytics.kde(ages, analytics.default_kde_grid(ages))
            write_canonical(os.path.join(out_dir, f"kde_{event}.json"), {"event": event, **curve})
    write_canonical(os.path.join(out_dir, "waterfall.json"), waterfall(decoded, scope))
    click.echo(canonical_dumps({"out_dir": out_dir}), nl=False)


@main.command()
@data_dir_option
@click.option("--decoded", "decoded_file", default="decoded.json", show_default=True)
@click.option("--subgroup", default=None)
@click.option("--subgroups-file", default=None)
@click.option("--min-support", default=2, show_default=True)
@click.option("--top", default=50, show_default=True)
@click.option("--out-dir", default="report", show_default=True)
@engine_errors
def report(data_dir, decoded_file, subgroup, subgroups_file, min_support, top, out_dir):
    """Render PNG figures and CSV summaries for a headless review."""
    from .report import render_report

    ds = load_dataset(data_dir)
    decoded = decoded_from_dict(read_json(decoded_file))
    scope = None
    if subgroup is not None:
        store = SubgroupStore(subgroups_file)
        scope = set(store.get(subgroup).members)
    written = render_report(ds, decoded, out_dir, scope, min_support, top)
    click.echo(canonical_dumps({"out_dir": out_dir, "files": sorted(os.path.basename(w) for w in written)}), nl=False)


@main.command()
@data_dir_option
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--workspace-file", default=None, help="Subgroup store path (default <data-dir>/subgroups.json).")
@click.option("--autoload/--no-autoload", default=True, show_default=True, help="Ingest data-dir CSVs at startup when present.")
@engine_errors
def serve(data_dir, port, host, workspace_file, autoload):
    """Serve the HTTP JSON API."""
    import uvicorn

    from .service import Workspace, create_app

    ws = Workspace(data_dir, workspace_file)
    if autoload and os.path.exists(os.path.join(data_dir, "schema.json")):
        ws.install_dataset(load_dataset(data_dir))
    uvicorn.run(create_app(ws), host=host, port=port, log_level="info")


main.add_command(train_cmd, name="train")

if __name__ == "__main__":
    main()
