"""Headless report rendering: PNG figures plus delimited summaries.

Used by the CLI report path; figures mirror the interactive views so a
batch run leaves reviewable artifacts next to the canonical JSON exports.
"""

from __future__ import annotations

import csv
import math
import os
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import FancyArrowPatch

from . import analytics
from .data import Dataset
from .hmm.decode import DecodedSubject
from .layout import BundleParams, waterfall
from .patterns import collapse_all, mine_patterns

# stable categorical palette by state index; >= 12 distinguishable hues
STATE_COLORS = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
    "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac", "#86bcb6", "#d37295",
    "#fabfd2", "#b6992d", "#499894", "#79706e", "#d7b5a6", "#a0cbe8",
    "#ffbe7d", "#8cd17d",
]


def state_color(state: int) -> str:
    return STATE_COLORS[state % len(STATE_COLORS)]


def _save(fig, out_dir: str, name: str) -> str:
    path = os.path.join(out_dir, name)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def render_feature_matrix(summary: dict, out_dir: str) -> str:
    variables = summary["variables"]
    k = summary["n_states"]
    fig, ax = plt.subplots(figsize=(1.0 + 0.6 * k, 0.8 + 0.5 * len(variables)))
    cmap = plt.get_cmap("RdBu_r")
    for row, var in enumerate(variables):
        for cell in var["cells"]:
            norm = cell["normalized_mean"]
            color = "#eeeeee" if norm is None else cmap(norm)
            ax.add_patch(plt.Rectangle((cell["state"], row), 0.92, 0.92, color=color))
            if cell["mean"] is not None:
                ax.text(
                    cell["state"] + 0.46,
                    row + 0.46,
                    f"{cell['mean']:.2f}",
                    ha="center",
                    va="center",
                    fontsize=7,
                )
    ax.set_xlim(0, k)
    ax.set_ylim(len(variables), 0)
    ax.set_xticks([s + 0.46 for s in range(k)], [str(s) for s in range(k)])
    ax.set_yticks([r + 0.46 for r in range(len(variables))], [v["name"] for v in variables])
    ax.set_xlabel("state")
    ax.set_title("Per-state variable means (min-max scaled per row)")
    return _save(fig, out_dir, "feature_matrix.png")


def render_waterfall(geometry: dict, out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(10, 6))
    ax.set_facecolor("#1b1b22")
    fig.patch.set_facecolor("#1b1b22")
    for traj in geometry["trajectories"]:
        pts = np.asarray(traj["points"])
        ax.plot(pts[:, 0], pts[:, 1], color="#d0d0da", lw=0.4, alpha=0.35, zorder=1)
    xs = [d["x"] for d in geometry["dots"]]
    ys = [d["lane"] * geometry["lane_gap"] + d["y_offset"] for d in geometry["dots"]]
    colors = [state_color(d["lane"]) for d in geometry["dots"]]
    ax.scatter(xs, ys, s=6, c=colors, zorder=2, linewidths=0)
    lanes = sorted({d["lane"] for d in geometry["dots"]})
    ax.set_yticks([lane * geometry["lane_gap"] for lane in lanes], [f"state {lane}" for lane in lanes])
    ax.tick_params(colors="#d0d0da")
    for spine in ax.spines.values():
        spine.set_color("#555566")
    ax.set_xlabel("age (months)", color="#d0d0da")
    ax.set_title("Pathway waterfall", color="#d0d0da")
    return _save(fig, out_dir, "waterfall.png")


def _render_stacked_columns(columns: Sequence[dict], xlabel: str, title: str):
    fig, ax = plt.subplots(figsize=(10, 5))
    width = 0.8
    positions = {}
    for ci, column in enumerate(columns):
        base = 0
        offsets = {}
        for stack in column["stacks"]:
            ax.add_patch(
                plt.Rectangle(
                    (ci - width / 2, base),
                    width,
                    stack["count"],
                    color=state_color(stack["state"]),
                    linewidth=0,
                )
            )
            offsets[stack["state"]] = base
            base += stack["count"]
        positions[column["index"]] = (ci, offsets)
        ax.set_xlim(-1, len(columns))
        ax.set_ylim(0, max(base + 1, ax.get_ylim()[1]))
    # links as translucent bands between consecutive columns
    for column in columns:
        nxt = positions.get(column["index"] + 1)
        cur = positions.get(column["index"])
        if nxt is None or cur is None:
            continue
        out_off = dict(cur[1])
        in_off = dict(nxt[1])
        for link in column["links"]:
            a, b, count = link["source_state"], link["target_state"], link["count"]
            x0, x1 = cur[0] + width / 2, nxt[0] - width / 2
            y0, y1 = out_off.get(a, 0), in_off.get(b, 0)
            ax.fill(
                [x0, x1, x1, x0],
                [y0, y1, y1 + count, y0 + count],
                color=state_color(a),
                alpha=0.3,
                linewidth=0,
            )
            out_off[a] = y0 + count
            in_off[b] = y1 + count
    ax.set_xticks(range(len(columns)), [str(c["index"]) for c in columns])
    ax.set_xlabel(xlabel)
    ax.set_ylabel("subjects")
    ax.set_title(title)
    return fig


def render_sankeys(by_visit: dict, by_time: dict, out_dir: str) -> list[str]:
    paths = []
    fig = _render_stacked_columns(by_visit["columns"], "visit index", "Pathway over observation")
    paths.append(_save(fig, out_dir, "pathway_by_visit.png"))
    fig = _render_stacked_columns(
        by_time["columns"], f"age bin ({by_time['bin_months']:g} months)", "Pathway by time unit"
    )
    paths.append(_save(fig, out_dir, "pathway_by_time.png"))
    return paths


def render_chord(chord: dict, out_dir: str) -> str:
    k = chord["n_states"]
    fig, ax = plt.subplots(figsize=(6, 6))
    angles = [2 * math.pi * i / max(k, 1) for i in range(k)]
    radius = 1.0
    total = sum(chord["node_sizes"]) or 1
    coords = {}
    for s, angle in enumerate(angles):
        x, y = radius * math.cos(angle), radius * math.sin(angle)
        coords[s] = (x, y)
        size = chord["node_sizes"][s]
        ax.scatter([x], [y], s=120 + 2400 * size / total, color=state_color(s), zorder=3)
        ax.annotate(str(s), (1.18 * x, 1.18 * y), ha="center", va="center")
    max_count = max((a["count"] for a in chord["arcs"]), default=1)
    for arc in chord["arcs"]:
        x0, y0 = coords[arc["source"]]
        x1, y1 = coords[arc["target"]]
        patch = FancyArrowPatch(
            (x0, y0),
            (x1, y1),
            connectionstyle="arc3,rad=0.25",
            arrowstyle="-",
            lw=0.6 + 4.0 * arc["count"] / max_count,
            color=state_color(arc["source"]),
            alpha=0.5,
        )
        ax.add_patch(patch)
    ax.set_xlim(-1.4, 1.4)
    ax.set_ylim(-1.4, 1.4)
    ax.set_aspect("equal")
    ax.axis("off")
    ax.set_title("State transitions (consecutive visits)")
    return _save(fig, out_dir, "chord.png")


def render_dual_kde(primary: dict, secondary: Optional[dict], labels: tuple[str, str], out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(9, 4))
    x = np.asarray(primary["x"])
    d = np.asarray(primary["density"])
    ax.fill_between(x, 0, d, color="#e15759", alpha=0.55, label=labels[0])
    ax.annotate(
        "",
        xy=(primary["mean"], 0),
        xytext=(primary["mean"], float(d.max()) * 0.6),
        arrowprops={"arrowstyle": "->", "color": "#e15759"},
    )
    if secondary is not None:
        x2 = np.asarray(secondary["x"])
        d2 = -np.asarray(secondary["density"])
        ax.fill_between(x2, 0, d2, color="#b07aa1", alpha=0.55, label=labels[1])
        ax.annotate(
            "",
            xy=(secondary["mean"], 0),
            xytext=(secondary["mean"], float(d2.min()) * 0.6),
            arrowprops={"arrowstyle": "->", "color": "#b07aa1"},
        )
    ax.axhline(0, color="#444444", lw=0.8)
    ax.set_xlabel("age (months)")
    ax.set_ylabel("density")
    ax.legend(loc="upper right")
    ax.set_title("Outcome event densities")
    return _save(fig, out_dir, "kde_events.png")


def render_pattern_list(patterns: Sequence[dict], out_dir: str) -> str:
    n = len(patterns)
    fig, ax = plt.subplots(figsize=(7, 0.6 + 0.36 * max(n, 1)))
    max_support = max((p["support"] for p in patterns), default=1)
    for row, pattern in enumerate(patterns):
        y = n - row
        for i, state in enumerate(pattern["states"]):
            ax.scatter([i * 0.5], [y], s=110, color=state_color(state), zorder=3)
            ax.text(i * 0.5, y, str(state), ha="center", va="center", fontsize=7, zorder=4)
        bar_x = 0.5 * 8
        ax.barh(y, 3.0 * pattern["support"] / max_support, left=bar_x, height=0.55, color="#9db2c8")
        ax.text(bar_x + 3.1 * pattern["support"] / max_support, y, str(pattern["support"]), va="center", fontsize=8)
    ax.set_xlim(-0.5, 12)
    ax.set_ylim(0, n + 1)
    ax.axis("off")
    ax.set_title("Frequent transition patterns (closed, by distinct subjects)")
    return _save(fig, out_dir, "pattern_list.png")


def write_feature_csv(summary: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variable", "state", "mean", "std", "normalized_mean", "n_visits", "n_missing"])
        for var in summary["variables"]:
            for cell in var["cells"]:
                writer.writerow(
                    [
                        var["name"],
                        cell["state"],
                        "" if cell["mean"] is None else repr(cell["mean"]),
                        "" if cell["std"] is None else repr(cell["std"]),
                        "" if cell["normalized_mean"] is None else repr(cell["normalized_mean"]),
                        cell["n_visits"],
                        cell["n_missing"],
                    ]
                )


def write_chord_csv(chord: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source", "target", "count"])
        for i, row in enumerate(chord["counts"]):
            for j, count in enumerate(row):
                if count:
                    writer.writerow([i, j, count])


def write_patterns_csv(patterns: Sequence[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pattern", "support"])
        for p in patterns:
            writer.writerow(["->".join(str(s) for s in p["states"]), p["support"]])


def render_report(
    ds: Dataset,
    decoded: Sequence[DecodedSubject],
    out_dir: str,
    scope: Optional[set[str]] = None,
    min_support: int = 2,
    top: int = 50,
    bundle_params: BundleParams = BundleParams(),
) -> list[str]:
    """Render every figure and delimited summary into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    summary = analytics.feature_summary(decoded, ds, scope)
    written.append(render_feature_matrix(summary, out_dir))
    write_feature_csv(summary, os.path.join(out_dir, "feature_summary.csv"))
    written.append(os.path.join(out_dir, "feature_summary.csv"))

    geometry = waterfall(decoded, scope, params=bundle_params)
    written.append(render_waterfall(geometry, out_dir))

    by_visit = analytics.sankey_by_visit(decoded, scope)
    by_time = analytics.sankey_by_time(decoded, scope)
    written.extend(render_sankeys(by_visit, by_time, out_dir))

    chord = analytics.chord_matrix(decoded, scope)
    written.append(render_chord(chord, out_dir))
    write_chord_csv(chord, os.path.join(out_dir, "chord.csv"))
    written.append(os.path.join(out_dir, "chord.csv"))

    events = [v.name for v in ds.variables(role="outcome-event")]
    curves = []
    for event in events[:2]:
        ages = analytics.event_ages(ds, event, scope)
        curves.append(analytics.kde(ages, analytics.default_kde_grid(ages)) if ages else None)
    if curves and curves[0] is not None:
        secondary = curves[1] if len(curves) > 1 else None
        written.append(
            render_dual_kde(curves[0], secondary, (events[0], events[1] if len(events) > 1 else ""), out_dir)
        )

    scoped = [d for d in decoded if scope is None or d.subject_id in scope]
    mined = [p.to_dict() for p in mine_patterns(collapse_all(scoped), min_support, top)] if scoped else []
    if mined:
        written.append(render_pattern_list(mined, out_dir))
    write_patterns_csv(mined, os.path.join(out_dir, "patterns.csv"))
    written.append(os.path.join(out_dir, "patterns.csv"))
    return written
