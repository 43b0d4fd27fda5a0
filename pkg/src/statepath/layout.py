"""Deterministic geometry for the pathway waterfall.

Beeswarm placement keeps every dot's time coordinate exact and dodges
collisions vertically inside a state lane. Trajectory bundling is a
force-directed edge bundling variant restricted to the vertical axis:
x-coordinates and segment endpoints never move, so transition timestamps
stay truthful; only added subdivision points bend toward compatible
segments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .hmm.decode import DecodedSubject

_EPS = 1e-9


# --- beeswarm -------------------------------------------------------------


def beeswarm(points: Sequence[tuple[float, int]], radius: float) -> list[float]:
    """Vertical offsets per point so same-lane dots keep distance >= 2*radius.

    Points are (x, lane); within each lane they are processed in ascending x
    (ties keep input order) and each takes the smallest-|y| free rung of the
    ladder 0, +r, -r, +2r, ... Offsets return in input order.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    ys = [0.0] * len(points)
    lanes: dict[int, list[int]] = {}
    for i, (_, lane) in enumerate(points):
        lanes.setdefault(lane, []).append(i)
    min_gap_sq = (2.0 * radius) ** 2
    for idxs in lanes.values():
        idxs.sort(key=lambda i: points[i][0])  # stable: ties stay in input order
        placed_x: list[float] = []
        placed_y: list[float] = []
        window_start = 0
        for i in idxs:
            x = points[i][0]
            while window_start < len(placed_x) and placed_x[window_start] < x - 2.0 * radius:
                window_start += 1
            xs = placed_x[window_start:]
            ys_w = placed_y[window_start:]
            rung = 0
            y = 0.0
            while True:
                candidates = (0.0,) if rung == 0 else (rung * radius, -rung * radius)
                hit = None
                for y in candidates:
                    if all((x - px) ** 2 + (y - py) ** 2 >= min_gap_sq for px, py in zip(xs, ys_w)):
                        hit = y
                        break
                if hit is not None:
                    y = hit
                    break
                rung += 1
            ys[i] = y
            placed_x.append(x)
            placed_y.append(y)
    return ys


# --- force-directed bundling ----------------------------------------------


@dataclass(frozen=True)
class BundleParams:
    cycles: int = 6
    initial_subdivisions: int = 1  # doubles each cycle
    iterations: int = 50  # per cycle
    initial_step: float = 0.04  # halves each cycle
    compat_threshold: float = 0.6
    stiffness: float = 0.1


def _segment_compatibility(p0: np.ndarray, p1: np.ndarray, q0: np.ndarray, q1: np.ndarray) -> np.ndarray:
    """Standard angle * scale * position * visibility product for all pairs.

    Inputs are (E, 2) endpoint arrays; returns the (E, E) compatibility
    matrix computed on the original, immutable endpoints.
    """
    vec = p1 - p0  # (E, 2)
    lengths = np.sqrt((vec**2).sum(axis=1))
    mid = (p0 + p1) / 2.0

    dot = vec @ vec.T
    denom = np.outer(lengths, lengths)
    angle = np.abs(dot) / np.maximum(denom, _EPS)

    lavg = (lengths[:, None] + lengths[None, :]) / 2.0
    lmin = np.minimum(lengths[:, None], lengths[None, :])
    lmax = np.maximum(lengths[:, None], lengths[None, :])
    scale = 2.0 / np.maximum(lavg / np.maximum(lmin, _EPS) + lmax / np.maximum(lavg, _EPS), _EPS)

    mid_dist = np.sqrt(((mid[:, None, :] - mid[None, :, :]) ** 2).sum(axis=2))
    position = lavg / np.maximum(lavg + mid_dist, _EPS)

    def one_way_visibility(a0, a1, b0, b1, a_len, a_vec, a_mid):
        # project b's endpoints onto line a, measure the overlap window
        t0 = ((b0 - a0[:, None, :]) * a_vec[:, None, :]).sum(axis=2) / np.maximum(a_len[:, None] ** 2, _EPS)
        t1 = ((b1 - a0[:, None, :]) * a_vec[:, None, :]).sum(axis=2) / np.maximum(a_len[:, None] ** 2, _EPS)
        i0 = a0[:, None, :] + t0[:, :, None] * a_vec[:, None, :]
        i1 = a0[:, None, :] + t1[:, :, None] * a_vec[:, None, :]
        im = (i0 + i1) / 2.0
        i_len = np.sqrt(((i1 - i0) ** 2).sum(axis=2))
        offset = np.sqrt(((a_mid[:, None, :] - im) ** 2).sum(axis=2))
        return np.maximum(0.0, 1.0 - 2.0 * offset / np.maximum(i_len, _EPS))

    vis_pq = one_way_visibility(p0, p1, q0[None, :, :], q1[None, :, :], lengths, vec, mid)
    vis_qp = one_way_visibility(q0, q1, p0[None, :, :], p1[None, :, :], lengths, vec, mid).T
    visibility = np.minimum(vis_pq, vis_qp)

    return angle * scale * position * visibility


def _resample_y(xs: np.ndarray, ys: np.ndarray, n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Re-subdivide every edge polyline to n_points via parameter interpolation."""
    e, old_n = xs.shape
    t_old = np.linspace(0.0, 1.0, old_n)
    t_new = np.linspace(0.0, 1.0, n_points)
    new_xs = np.empty((e, n_points))
    new_ys = np.empty((e, n_points))
    for i in range(e):
        new_xs[i] = np.interp(t_new, t_old, xs[i])
        new_ys[i] = np.interp(t_new, t_old, ys[i])
    # endpoints stay bitwise identical
    new_xs[:, 0], new_xs[:, -1] = xs[:, 0], xs[:, -1]
    new_ys[:, 0], new_ys[:, -1] = ys[:, 0], ys[:, -1]
    return new_xs, new_ys


def _bundle_edges(endpoints: np.ndarray, params: BundleParams) -> list[np.ndarray]:
    """Bundle 2-point edges (E, 2, 2); returns per-edge (n_points, 2) polylines.

    Edges without a compatible partner are returned as their original two
    points, exactly.
    """
    e = endpoints.shape[0]
    p0, p1 = endpoints[:, 0, :], endpoints[:, 1, :]
    compat = _segment_compatibility(p0, p1, p0, p1)
    np.fill_diagonal(compat, 0.0)
    pair_i, pair_j = np.nonzero(compat >= params.compat_threshold)
    active = np.unique(pair_i)
    active_set = set(int(x) for x in active)

    results: list[Optional[np.ndarray]] = [None] * e
    for idx in range(e):
        if idx not in active_set:
            results[idx] = endpoints[idx].copy()

    if active.size == 0:
        return [r for r in results]

    # remap active edges into compact arrays; compat is symmetric, so every
    # pair endpoint is active
    index_of = {int(edge): pos for pos, edge in enumerate(active)}
    pi = np.asarray([index_of[int(x)] for x in pair_i])
    pj = np.asarray([index_of[int(x)] for x in pair_j])

    a0, a1 = p0[active], p1[active]
    lengths = np.sqrt(((a1 - a0) ** 2).sum(axis=1))
    xs = np.stack([a0[:, 0], a1[:, 0]], axis=1)
    ys = np.stack([a0[:, 1], a1[:, 1]], axis=1)

    subdivisions = params.initial_subdivisions
    step = params.initial_step
    for cycle in range(params.cycles):
        xs, ys = _resample_y(xs, ys, subdivisions + 2)
        kp = params.stiffness / np.maximum(lengths * (subdivisions + 1), _EPS)
        dx_pairs = xs[pj] - xs[pi]  # fixed within the cycle
        for _ in range(params.iterations):
            spring = ys[:, :-2] + ys[:, 2:] - 2.0 * ys[:, 1:-1]
            force = kp[:, None] * spring
            dy = ys[pj] - ys[pi]
            dist = np.sqrt(dx_pairs**2 + dy**2)
            contrib = dy / np.maximum(dist, _EPS)
            electro = np.zeros_like(ys)
            np.add.at(electro, pi, contrib)
            ys[:, 1:-1] += step * (force + electro[:, 1:-1])
        subdivisions *= 2
        step *= 0.5

    for pos, edge in enumerate(active):
        results[int(edge)] = np.stack([xs[pos], ys[pos]], axis=1)
    return [r for r in results]


def bundle(trajectories: Sequence[Sequence[tuple[float, float]]], params: BundleParams = BundleParams()) -> list[list[tuple[float, float]]]:
    """Bundle polylines segment-wise; original vertices never move.

    Every consecutive point pair is an edge; zero-length segments pass
    through unchanged and take no part in the force simulation. Output
    polylines visit the same original vertices with bundled subdivision
    points in between.
    """
    segments = []  # (trajectory idx, segment idx, p0, p1)
    for ti, poly in enumerate(trajectories):
        if len(poly) < 2:
            raise ValueError(f"trajectory {ti} needs at least 2 points")
        for si in range(len(poly) - 1):
            p0 = np.asarray(poly[si], dtype=float)
            p1 = np.asarray(poly[si + 1], dtype=float)
            segments.append((ti, si, p0, p1))

    live = [(i, s) for i, s in enumerate(segments) if not np.array_equal(s[2], s[3])]
    bundled: dict[int, np.ndarray] = {}
    if live:
        endpoints = np.stack([np.stack([s[2], s[3]]) for _, s in live])
        for (orig_idx, _), polyline in zip(live, _bundle_edges(endpoints, params)):
            bundled[orig_idx] = polyline

    out: list[list[tuple[float, float]]] = []
    cursor = 0
    for poly in trajectories:
        points: list[tuple[float, float]] = [tuple(map(float, poly[0]))]
        for si in range(len(poly) - 1):
            seg = bundled.get(cursor)
            if seg is None:  # zero-length segment passes through unchanged
                points.append(tuple(map(float, poly[si + 1])))
            else:
                for row in seg[1:]:
                    points.append((float(row[0]), float(row[1])))
                # endpoint exactness regardless of float dust in resampling
                points[-1] = tuple(map(float, poly[si + 1]))
            cursor += 1
        out.append(points)
    return out


# --- waterfall assembly -----------------------------------------------------


def waterfall(
    decoded: Sequence[DecodedSubject],
    scope: Optional[Iterable[str]] = None,
    radius: float = 1.0,
    lane_gap: float = 12.0,
    params: BundleParams = BundleParams(),
) -> dict:
    """Beeswarm dots per state lane plus bundled per-subject trajectories.

    Dots keep (x=age, lane=state, y=lane offset). Trajectories run through
    the dot centers in absolute coordinates (y = lane*lane_gap + offset);
    only lane-changing segments are bundled, within-lane runs stay straight.
    """
    if scope is not None:
        wanted = set(scope)
        decoded = [d for d in decoded if d.subject_id in wanted]
    points = []
    owners = []
    for dec in decoded:
        for vi, visit in enumerate(dec.visits):
            points.append((visit.age, visit.state))
            owners.append((dec.subject_id, vi))
    offsets = beeswarm(points, radius) if points else []

    dots = [
        {
            "subject_id": sid,
            "visit": vi,
            "x": float(x),
            "lane": int(lane),
            "y_offset": float(off),
        }
        for (sid, vi), (x, lane), off in zip(owners, points, offsets)
    ]

    absolute: dict[str, list[tuple[float, float]]] = {}
    for dot in dots:
        absolute.setdefault(dot["subject_id"], []).append(
            (dot["x"], dot["lane"] * lane_gap + dot["y_offset"])
        )

    # bundle only segments that change lanes; collect them as 2-point polylines
    lane_of: dict[str, list[int]] = {}
    for dot in dots:
        lane_of.setdefault(dot["subject_id"], []).append(dot["lane"])
    transition_segments = []
    segment_keys = []
    for dec in decoded:
        pts = absolute.get(dec.subject_id, [])
        lanes = lane_of.get(dec.subject_id, [])
        for si in range(len(pts) - 1):
            if lanes[si] != lanes[si + 1]:
                transition_segments.append([pts[si], pts[si + 1]])
                segment_keys.append((dec.subject_id, si))
    bundled = bundle(transition_segments, params) if transition_segments else []
    bundled_by_key = dict(zip(segment_keys, bundled))

    trajectories = []
    for dec in decoded:
        pts = absolute.get(dec.subject_id, [])
        if not pts:
            continue
        path: list[list[float]] = [list(pts[0])]
        for si in range(len(pts) - 1):
            seg = bundled_by_key.get((dec.subject_id, si))
            if seg is None:
                path.append(list(pts[si + 1]))
            else:
                path.extend([float(x), float(y)] for x, y in seg[1:])
                path[-1] = list(pts[si + 1])
        trajectories.append({"subject_id": dec.subject_id, "points": path})

    return {
        "radius": radius,
        "lane_gap": lane_gap,
        "dots": dots,
        "trajectories": trajectories,
    }
