"""Graphicality predicate: probe a surface with vertical lines over a
cylinder's base, count sheets, and extract the graph with sup statistics.

Probing is resolution-limited.  The probe grid spacing delta defaults to
half the surface's native resolution and must not exceed it; every report
records the delta actually used.  Point samples are binned no finer than
their native spacing (finer columns would be empty), and no claim is made
about features below the probe scale.

A probe column fails graphicality three ways: no sheet in the height range
(gap), more than one sheet (multi), or a near-vertical crossing where graph
extraction is ill-posed (tangency).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._util import ConfigError
from .geometry import (
    ClosedCurve,
    Cylinder,
    GraphPatch,
    SurfaceSample,
    edge_lengths,
    gradient_field,
    hessian_field,
    to_json_dict,
)

TANGENCY_TOL = 1e-6
CLUSTER_GAP_FACTOR = 4.0
HOLD_RECORDS_DEFAULT = 10


@dataclass(frozen=True)
class GraphReport:
    """Outcome of probing one surface against one cylinder."""

    cylinder: Cylinder
    delta: float
    graphical: bool
    sheet_count: int
    sup_height: float | None = None
    sup_grad: float | None = None
    sup_hess: float | None = None
    graph: GraphPatch | None = None
    witness: dict | None = None


def graph_report_to_json(report: GraphReport) -> dict:
    doc = {
        "cylinder": {
            "center": [float(c) for c in report.cylinder.center],
            "radius": float(report.cylinder.radius),
            "height": float(report.cylinder.height),
        },
        "delta": float(report.delta),
        "graphical": bool(report.graphical),
        "sheet_count": int(report.sheet_count),
        "sup_height": None if report.sup_height is None else float(report.sup_height),
        "sup_grad": None if report.sup_grad is None else float(report.sup_grad),
        "sup_hess": None if report.sup_hess is None else float(report.sup_hess),
        "witness": report.witness,
    }
    if report.graph is not None:
        doc["graph"] = to_json_dict(report.graph)
    return doc


def native_resolution(surface) -> float:
    if isinstance(surface, GraphPatch):
        return surface.spacing
    if isinstance(surface, ClosedCurve):
        return float(edge_lengths(surface).max())
    if isinstance(surface, SurfaceSample):
        return float(np.median(surface.weights) ** (1.0 / surface.n))
    raise ConfigError(f"cannot probe {type(surface).__name__}")


def _probe_step(cyl: Cylinder, delta: float) -> tuple[float, int]:
    """Snap delta to an axis step hitting both base endpoints, >= 8 nodes."""
    intervals = max(int(math.ceil(2 * cyl.radius / delta)), 7)
    return 2 * cyl.radius / intervals, intervals + 1


def _report_from_grid(
    cyl: Cylinder,
    step: float,
    graphical: bool,
    m0: int,
    witness: dict | None,
    values: np.ndarray | None,
    stat_mask: np.ndarray | None,
    time: float,
) -> GraphReport:
    if not graphical or values is None:
        return GraphReport(
            cylinder=cyl,
            delta=step,
            graphical=False,
            sheet_count=m0,
            witness=witness,
        )
    patch = GraphPatch(
        center=cyl.base_center,
        radius=cyl.radius,
        spacing=step,
        values=values,
        time=time,
    )
    mask = patch.active if stat_mask is None else (patch.active & stat_mask)
    a_til = float(cyl.height_center[0])
    sup_height = float(np.max(np.abs(values[mask] - a_til)))
    df = gradient_field(patch)[mask]
    d2f = hessian_field(patch)[mask]
    sup_grad = float(np.max(np.linalg.norm(df, axis=-1)))
    sup_hess = float(np.max(np.sqrt(np.sum(d2f * d2f, axis=(-2, -1)))))
    return GraphReport(
        cylinder=cyl,
        delta=step,
        graphical=True,
        sheet_count=m0,
        sup_height=sup_height,
        sup_grad=sup_grad,
        sup_hess=sup_hess,
        graph=patch,
        witness=None,
    )


# ---------------------------------------------------------------------------
# Closed curves: exact segment-line crossings
# ---------------------------------------------------------------------------


def _curve_segment_arrays(curve: ClosedCurve):
    v = curve.vertices
    if curve.closed:
        return v[:, 0], v[:, 1], np.roll(v[:, 0], -1), np.roll(v[:, 1], -1)
    return v[:-1, 0], v[:-1, 1], v[1:, 0], v[1:, 1]


def _probe_index_ranges(x1, x2, lo, step, count):
    """Half-open probe index range [start, end) covered by each segment.

    A segment covers probe p iff p lies in [min(x1,x2), max(x1,x2)); at a
    shared vertex exactly one of the adjacent segments covers the probe, and
    a local x-extremum covers it zero times, so crossing parity is exact.
    """
    xlo = np.minimum(x1, x2)
    xhi = np.maximum(x1, x2)
    starts = np.ceil((xlo - lo) / step - 1e-12).astype(np.int64)
    ends = np.ceil((xhi - lo) / step - 1e-12).astype(np.int64)
    return np.clip(starts, 0, count), np.clip(ends, 0, count)


def _crossings_in_column(curve, p, a_til, height):
    """Exact in-band crossing heights of the vertical line x = p."""
    x1, y1, x2, y2 = _curve_segment_arrays(curve)
    hit = ((x1 <= p) & (p < x2)) | ((x2 <= p) & (p < x1))
    dx = x2 - x1
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(hit, (p - x1) / np.where(dx != 0, dx, 1.0), 0.0)
    y = y1 + t * (y2 - y1)
    sel = hit & (np.abs(y - a_til) <= height)
    return y[sel]


def _probe_curve(curve: ClosedCurve, cyl: Cylinder, delta: float) -> GraphReport:
    a_hat = float(cyl.base_center[0])
    a_til = float(cyl.height_center[0])
    step, count = _probe_step(cyl, delta)
    lo = a_hat - cyl.radius
    probes = lo + step * np.arange(count)
    x1, y1, x2, y2 = _curve_segment_arrays(curve)
    starts, ends = _probe_index_ranges(x1, x2, lo, step, count)
    covering = ends > starts

    band_lo, band_hi = a_til - cyl.height, a_til + cyl.height
    ylo = np.minimum(y1, y2)
    yhi = np.maximum(y1, y2)
    fully_in = (ylo >= band_lo) & (yhi <= band_hi)
    fully_out = (yhi < band_lo) | (ylo > band_hi)
    partial = ~fully_in & ~fully_out

    counts = np.zeros(count + 1, dtype=np.int64)
    sel = covering & fully_in
    np.add.at(counts, starts[sel], 1)
    np.add.at(counts, ends[sel], -1)
    counts = np.cumsum(counts)[:count]

    # segments straddling the band edge need the exact per-probe height test
    slopes = np.zeros(x1.shape)
    dx = x2 - x1
    nz = dx != 0
    slopes[nz] = (y2[nz] - y1[nz]) / dx[nz]
    for s in np.flatnonzero(covering & partial):
        idx = np.arange(starts[s], ends[s])
        ycross = y1[s] + (probes[idx] - x1[s]) * slopes[s]
        inband = np.abs(ycross - a_til) <= cyl.height
        np.add.at(counts, idx[inband], 1)

    m0 = int(counts.max()) if counts.size else 0

    # near-vertical segments inside the cylinder: graph extraction ill-posed
    seg_len = np.hypot(x2 - x1, y2 - y1)
    near_vert = np.abs(x2 - x1) / seg_len < TANGENCY_TOL
    in_x = (np.minimum(x1, x2) <= a_hat + cyl.radius) & (
        np.maximum(x1, x2) >= a_hat - cyl.radius
    )
    in_y = (yhi >= band_lo) & (ylo <= band_hi)
    tangent_segs = np.flatnonzero(near_vert & in_x & in_y)

    witness = None
    if np.any(counts > 1):
        col = int(np.argmax(counts > 1))
        heights = sorted(float(h) for h in _crossings_in_column(
            curve, probes[col], a_til, cyl.height))
        witness = {
            "kind": "multi",
            "base_point": [float(probes[col])],
            "count": int(counts[col]),
            "heights": heights,
        }
    elif tangent_segs.size:
        s = int(tangent_segs[0])
        witness = {
            "kind": "tangency",
            "base_point": [(float(x1[s]) + float(x2[s])) / 2],
            "height": (float(y1[s]) + float(y2[s])) / 2,
        }
    elif np.any(counts == 0):
        col = int(np.argmax(counts == 0))
        witness = {"kind": "gap", "base_point": [float(probes[col])], "count": 0}

    graphical = witness is None
    values = None
    if graphical:
        # single cover: write each covering segment's interpolated heights
        values = np.full(count, a_til)
        sel = covering & fully_in
        reps = (ends[sel] - starts[sel]).astype(np.int64)
        seg_ids = np.repeat(np.flatnonzero(sel), reps)
        base = np.repeat(starts[sel], reps)
        offs = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps)
        cols = base + offs
        values[cols] = y1[seg_ids] + (probes[cols] - x1[seg_ids]) * slopes[seg_ids]
        for s in np.flatnonzero(covering & partial):
            idx = np.arange(starts[s], ends[s])
            ycross = y1[s] + (probes[idx] - x1[s]) * slopes[s]
            inband = np.abs(ycross - a_til) <= cyl.height
            values[idx[inband]] = ycross[inband]
    return _report_from_grid(
        cyl, step, graphical, m0, witness, values, None, curve.time
    )


def curve_probe_parity_violations(
    curve: ClosedCurve, cyl: Cylinder, delta: float | None = None
) -> int:
    """Probes whose full-line crossing count is odd; 0 for any closed curve."""
    if not curve.closed:
        raise ConfigError("parity check needs a closed curve")
    if delta is None:
        delta = native_resolution(curve) / 2
    step, count = _probe_step(cyl, delta)
    lo = float(cyl.base_center[0]) - cyl.radius
    x1, _, x2, _ = _curve_segment_arrays(curve)
    starts, ends = _probe_index_ranges(x1, x2, lo, step, count)
    counts = np.zeros(count + 1, dtype=np.int64)
    sel = ends > starts
    np.add.at(counts, starts[sel], 1)
    np.add.at(counts, ends[sel], -1)
    counts = np.cumsum(counts)[:count]
    return int(np.count_nonzero(counts % 2))


# ---------------------------------------------------------------------------
# Graph patches: direct interpolation
# ---------------------------------------------------------------------------


def _interp_patch(patch: GraphPatch, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Linear interpolation of f at base points q (P, n) with coverage mask."""
    lo = patch.center - patch.radius
    pos = (q - lo) / patch.spacing
    m = patch.shape[0]
    covered = np.all((pos >= -1e-9) & (pos <= m - 1 + 1e-9), axis=1)
    i0 = np.clip(np.floor(pos).astype(int), 0, m - 2)
    frac = np.clip(pos - i0, 0.0, 1.0)
    act = patch.active
    vals = patch.values
    if patch.n == 1:
        ia = i0[:, 0]
        covered &= act[ia] & act[ia + 1]
        out = (1 - frac[:, 0]) * vals[ia] + frac[:, 0] * vals[ia + 1]
    elif patch.n == 2:
        ix, iy = i0[:, 0], i0[:, 1]
        fx, fy = frac[:, 0], frac[:, 1]
        covered &= act[ix, iy] & act[ix + 1, iy] & act[ix, iy + 1] & act[ix + 1, iy + 1]
        out = (
            vals[ix, iy] * (1 - fx) * (1 - fy)
            + vals[ix + 1, iy] * fx * (1 - fy)
            + vals[ix, iy + 1] * (1 - fx) * fy
            + vals[ix + 1, iy + 1] * fx * fy
        )
    else:
        raise ConfigError("probing supports n in {1, 2}")
    return out, covered


def _probe_graph_patch(patch: GraphPatch, cyl: Cylinder, delta: float) -> GraphReport:
    if cyl.base_dim != patch.n:
        raise ConfigError(
            f"cylinder base dim {cyl.base_dim} does not match patch dim {patch.n}"
        )
    a_til = float(cyl.height_center[0])
    step, count = _probe_step(cyl, delta)
    axes = [
        cyl.base_center[i] - cyl.radius + step * np.arange(count)
        for i in range(patch.n)
    ]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    grid_shape = mesh.shape[:-1]
    q = mesh.reshape(-1, patch.n)
    in_ball = np.linalg.norm(q - cyl.base_center, axis=1) <= cyl.radius * (1 + 1e-12)
    vals, covered = _interp_patch(patch, q)
    in_height = np.abs(vals - a_til) <= cyl.height
    ok = covered & in_height
    m0 = 1 if np.any(ok & in_ball) else 0

    witness = None
    bad = in_ball & ~ok
    if np.any(bad):
        col = int(np.argmax(bad))
        witness = {
            "kind": "gap",
            "base_point": [float(c) for c in q[col]],
            "count": 0,
        }
    graphical = witness is None
    values = stat_mask = None
    if graphical:
        values = np.where(covered, vals, a_til).reshape(grid_shape)
        stat_mask = (covered & ok).reshape(grid_shape)
    return _report_from_grid(
        cyl, step, graphical, m0, witness, values, stat_mask, patch.time
    )


# ---------------------------------------------------------------------------
# Point samples: column binning and height clustering
# ---------------------------------------------------------------------------


def _probe_sample(sample: SurfaceSample, cyl: Cylinder, delta: float) -> GraphReport:
    nb = cyl.base_dim
    if nb != sample.n:
        raise ConfigError(
            f"cylinder base dim {nb} does not match sample dim {sample.n}"
        )
    if nb > 2:
        raise ConfigError("probing supports n in {1, 2}")
    a_til = float(cyl.height_center[0])
    native = native_resolution(sample)
    # columns finer than the sample spacing would be empty; bin at >= native
    step, count = _probe_step(cyl, max(delta, native))
    lo = cyl.base_center - cyl.radius
    base = sample.points[:, :nb]
    hgt = sample.points[:, -1]
    idx = np.round((base - lo) / step).astype(int)
    in_range = np.all((idx >= 0) & (idx < count), axis=1)
    ncols = count**nb
    lin = idx[:, 0] * (count if nb == 2 else 1)
    if nb == 2:
        lin = lin + idx[:, 1]
    lin = np.where(in_range, lin, ncols)

    order = np.lexsort((hgt, lin))
    lin_s = lin[order]
    hgt_s = hgt[order]
    keep = lin_s < ncols
    lin_s, hgt_s = lin_s[keep], hgt_s[keep]
    nu_last_s = sample.normals[order][keep][:, -1]

    gap_limit = CLUSTER_GAP_FACTOR * step
    new_col = np.empty(lin_s.shape, dtype=bool)
    new_col[:1] = True
    new_col[1:] = lin_s[1:] != lin_s[:-1]
    new_cluster = new_col.copy()
    if lin_s.size > 1:
        new_cluster[1:] |= (hgt_s[1:] - hgt_s[:-1]) > gap_limit
    starts = np.flatnonzero(new_cluster)
    if starts.size:
        sums = np.add.reduceat(hgt_s, starts)
        sizes = np.diff(np.append(starts, lin_s.size))
        means = sums / sizes
        cluster_col = lin_s[starts]
        cluster_in = np.abs(means - a_til) <= cyl.height
        counts = np.bincount(cluster_col[cluster_in], minlength=ncols)
        col_value = np.zeros(ncols)
        col_value[cluster_col[cluster_in]] = means[cluster_in]
    else:
        counts = np.zeros(ncols, dtype=int)
        col_value = np.zeros(ncols)

    grid_shape = (count,) * nb
    axes = [lo[i] + step * np.arange(count) for i in range(nb)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, nb)
    in_ball = np.linalg.norm(mesh - cyl.base_center, axis=1) <= cyl.radius * (1 + 1e-12)

    counts = counts.reshape(-1)
    m0 = int(counts[in_ball].max()) if np.any(in_ball) else 0

    in_cyl_pts = (
        (np.linalg.norm(base - cyl.base_center, axis=1) <= cyl.radius)
        & (np.abs(hgt - a_til) <= cyl.height)
    )
    tangent_pts = in_cyl_pts & (np.abs(sample.normals[:, -1]) < TANGENCY_TOL)

    witness = None
    multi = in_ball & (counts > 1)
    gaps = in_ball & (counts == 0)
    if np.any(multi):
        col = int(np.argmax(multi))
        sel = (cluster_col == col) & cluster_in
        witness = {
            "kind": "multi",
            "base_point": [float(c) for c in mesh[col]],
            "count": int(counts[col]),
            "heights": sorted(float(h) for h in means[sel]),
        }
    elif np.any(tangent_pts):
        p = sample.points[int(np.argmax(tangent_pts))]
        witness = {
            "kind": "tangency",
            "base_point": [float(c) for c in p[:nb]],
            "height": float(p[-1]),
        }
    elif np.any(gaps):
        col = int(np.argmax(gaps))
        witness = {
            "kind": "gap",
            "base_point": [float(c) for c in mesh[col]],
            "count": 0,
        }
    graphical = witness is None and m0 == 1
    values = stat_mask = None
    if graphical:
        filled = counts == 1
        values = np.where(filled, col_value, a_til).reshape(grid_shape)
        stat_mask = filled.reshape(grid_shape)
    return _report_from_grid(cyl, step, graphical, m0, witness, values, stat_mask, 0.0)


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def is_graphical(surface, cyl: Cylinder, delta: float | None = None) -> GraphReport:
    """Probe the surface over the cylinder base and report graphicality.

    `surface` is a SurfaceSample, ClosedCurve, or GraphPatch; delta defaults
    to half the native resolution and must not exceed it.
    """
    native = native_resolution(surface)
    if delta is None:
        delta = native / 2
    if delta <= 0:
        raise ConfigError("probe spacing must be > 0")
    if delta > native * (1 + 1e-12):
        raise ConfigError(
            f"probe spacing {delta:.3e} exceeds native resolution {native:.3e}"
        )
    if cyl.radius <= 0 or cyl.height <= 0:
        return GraphReport(
            cylinder=cyl, delta=delta, graphical=False, sheet_count=0,
            witness={"kind": "gap", "base_point": [], "count": 0},
        )
    if isinstance(surface, ClosedCurve):
        return _probe_curve(surface, cyl, delta)
    if isinstance(surface, GraphPatch):
        return _probe_graph_patch(surface, cyl, delta)
    return _probe_sample(surface, cyl, delta)


def first_nongraphical_time(trace, cyl: Cylinder, delta: float | None = None) -> float | None:
    """Earliest recorded time whose report is not graphical; None if never."""
    for state in trace.snapshots:
        if not is_graphical(state.surface, cyl, delta).graphical:
            return state.t
    return None


def first_graphical_time(
    trace, cyl: Cylinder, hold: int = HOLD_RECORDS_DEFAULT, delta: float | None = None
) -> float | None:
    """Earliest recorded time from which reports stay graphical for `hold`
    consecutive records (or through the end of the trace)."""
    flags = [is_graphical(s.surface, cyl, delta).graphical for s in trace.snapshots]
    # first index whose graphical run reaches hold or persists to the end
    run_length = [0] * (len(flags) + 1)
    for i in range(len(flags) - 1, -1, -1):
        run_length[i] = run_length[i + 1] + 1 if flags[i] else 0
    for i, state in enumerate(trace.snapshots):
        if run_length[i] >= hold or (flags[i] and run_length[i] == len(flags) - i):
            return state.t
    return None
