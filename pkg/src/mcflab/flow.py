"""Explicit time integrators for graph mean curvature flow and curve
shortening flow.

Forward Euler with a parabolic CFL restriction: dt <= cfl * h^2/(1+max|Df|^2)
for graphs, dt <= cfl * (min edge)^2 for curves.  `run_flow` drives either
stepper until the horizon, extinction, or a terminal event, recording
snapshots and monitor reports every `record_stride` steps, and can persist
the trace as a run directory (manifest, snapshots, timeseries, events).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import geometry
from ._util import ConfigError, GeometryError, canonical_dumps, sha256_file, write_csv
from .geometry import ClosedCurve, GraphPatch

EDGE_COLLAPSE = 1e-9
EDGE_RATIO_LIMIT = 4.0
EXTINCTION_LENGTH_FACTOR = 10.0
EXTINCTION_AREA_FACTOR = 1e-6

BOUNDARY_MODES = ("dirichlet-frozen", "periodic")


class StepRejected(RuntimeError):
    """Fixed dt exceeds the CFL limit for the current state."""


class BlowUp(RuntimeError):
    """Update produced non-finite values (graph coordinates degenerating)."""


@dataclass(frozen=True)
class FlowConfig:
    """Integrator policy.  dt=None selects the adaptive CFL step."""

    t_end: float
    dt: float | None = None
    cfl: float = 0.2
    boundary: str = "dirichlet-frozen"
    record_stride: int = 1
    remesh_spacing: float | None = None

    def __post_init__(self):
        if not np.isfinite(self.t_end) or self.t_end < 0:
            raise ConfigError("t_end must be finite and >= 0")
        if not 0 < self.cfl <= 0.25:
            raise ConfigError("cfl must lie in (0, 0.25]")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("fixed dt must be > 0")
        if self.boundary not in BOUNDARY_MODES:
            raise ConfigError(f"boundary must be one of {BOUNDARY_MODES}")
        if self.record_stride < 1:
            raise ConfigError("record_stride must be >= 1")
        if self.remesh_spacing is not None and not self.remesh_spacing > 0:
            raise ConfigError("remesh_spacing must be > 0")


@dataclass(frozen=True)
class FlowState:
    surface: object
    step: int = 0
    t: float = 0.0

    def __post_init__(self):
        if not isinstance(self.surface, (GraphPatch, ClosedCurve)):
            raise ConfigError("surface must be a GraphPatch or ClosedCurve")


@dataclass
class FlowTrace:
    """Recorded snapshots, monitor reports, and events of one flow run."""

    config: FlowConfig
    snapshots: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    events: list = field(default_factory=list)

    @property
    def final(self) -> FlowState:
        return self.snapshots[-1]

    def events_of(self, kind: str) -> list[dict]:
        return [e for e in self.events if e["event"] == kind]

    @property
    def extinction_time(self) -> float | None:
        ev = self.events_of("extinction")
        return ev[0]["t"] if ev else None


# ---------------------------------------------------------------------------
# Steppers
# ---------------------------------------------------------------------------


def graph_cfl_limit(values: np.ndarray, spacing: float, cfl: float, periodic: bool) -> float:
    df = geometry.gradient_raw(values, spacing, periodic)
    gmax = float(np.max(np.sum(df * df, axis=-1)))
    return cfl * spacing**2 / (1.0 + gmax)


def _advance_graph(
    values: np.ndarray, spacing: float, dt: float, periodic: bool
) -> np.ndarray:
    rhs = geometry.graph_mcf_rhs_raw(values, spacing, periodic)
    out = values + dt * rhs
    if not periodic:
        n = values.ndim
        for axis in range(n):
            sl_lo = [slice(None)] * n
            sl_hi = [slice(None)] * n
            sl_lo[axis] = 0
            sl_hi[axis] = -1
            out[tuple(sl_lo)] = values[tuple(sl_lo)]
            out[tuple(sl_hi)] = values[tuple(sl_hi)]
    if not np.isfinite(out).all():
        raise BlowUp(f"non-finite graph values after step of dt={dt}")
    return out


def step_graph_mcf(state: FlowState, dt: float, config: FlowConfig | None = None) -> FlowState:
    """One forward-Euler step of dt f = (delta_ij - D_if D_jf/(1+|Df|^2)) D_iD_jf.

    Boundary nodes are frozen (dirichlet) or wrapped (periodic).  dt beyond
    the CFL limit rejects the step with a diagnostic.
    """
    cfg = config or FlowConfig(t_end=dt, dt=dt)
    patch = state.surface
    if not isinstance(patch, GraphPatch):
        raise ConfigError("step_graph_mcf requires a GraphPatch state")
    periodic = cfg.boundary == "periodic"
    limit = graph_cfl_limit(patch.values, patch.spacing, cfg.cfl, periodic)
    if dt > limit * (1 + 1e-12):
        raise StepRejected(
            f"dt={dt:.3e} exceeds CFL limit {limit:.3e} "
            f"(cfl={cfg.cfl}, h={patch.spacing:.3e})"
        )
    new_values = _advance_graph(patch.values, patch.spacing, dt, periodic)
    new_patch = GraphPatch(
        center=patch.center,
        radius=patch.radius,
        spacing=patch.spacing,
        values=new_values,
        codim=patch.codim,
        time=state.t + dt,
    )
    return FlowState(surface=new_patch, step=state.step + 1, t=state.t + dt)


def _advance_curve(vertices: np.ndarray, dt: float, closed: bool) -> np.ndarray:
    out = vertices + dt * geometry.csf_velocity_raw(vertices, closed)
    if not np.isfinite(out).all():
        raise BlowUp(f"non-finite vertices after step of dt={dt}")
    return out


def step_csf(state: FlowState, dt: float, config: FlowConfig | None = None) -> FlowState:
    """One forward-Euler step of curve shortening: vertex += dt * kappa * N."""
    cfg = config or FlowConfig(t_end=dt, dt=dt)
    curve = state.surface
    if not isinstance(curve, ClosedCurve):
        raise ConfigError("step_csf requires a ClosedCurve state")
    edges = geometry.edge_lengths(curve)
    limit = cfg.cfl * float(edges.min()) ** 2
    if dt > limit * (1 + 1e-12):
        raise StepRejected(
            f"dt={dt:.3e} exceeds CFL limit {limit:.3e} "
            f"(cfl={cfg.cfl}, min edge={edges.min():.3e})"
        )
    new_vertices = _advance_curve(curve.vertices, dt, curve.closed)
    new_curve = ClosedCurve(vertices=new_vertices, closed=curve.closed, time=state.t + dt)
    return FlowState(surface=new_curve, step=state.step + 1, t=state.t + dt)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


def _remesh_count(length: float, current: int, spacing: float | None) -> int:
    if spacing is None:
        return current
    return max(8, int(round(length / spacing)))


def run_flow(
    initial: FlowState | GraphPatch | ClosedCurve,
    config: FlowConfig,
    monitors: Sequence[Callable] = (),
) -> FlowTrace:
    """Advance the flow to t_end, recording every record_stride steps.

    Monitors are callables (trace_so_far, state) -> report | list | None,
    invoked at each recorded step.  Step errors become trace events:
    blow_up and step_rejected terminate; remesh, non_simple, extinction,
    horizon are recorded as they occur (extinction also terminates).
    """
    if isinstance(initial, (GraphPatch, ClosedCurve)):
        initial = FlowState(surface=initial, step=0, t=initial.time)
    trace = FlowTrace(config=config)
    is_curve = isinstance(initial.surface, ClosedCurve)
    periodic = config.boundary == "periodic"

    def record(state: FlowState):
        trace.snapshots.append(state)
        if is_curve and state.surface.closed and not geometry.is_simple(state.surface):
            trace.events.append(
                {"event": "non_simple", "step": state.step, "t": state.t}
            )
        new_reports = []
        for monitor in monitors:
            rep = monitor(trace, state)
            if rep is None:
                continue
            new_reports.extend(rep if isinstance(rep, (list, tuple)) else [rep])
        new_reports.sort(key=lambda r: r.monitor_id)
        trace.reports.extend(new_reports)
        for r in new_reports:
            if not r.passed and not r.skipped:
                trace.events.append(
                    {
                        "event": "monitor_failure",
                        "monitor_id": r.monitor_id,
                        "step": state.step,
                        "t": state.t,
                        "value": r.value,
                        "bound": r.bound,
                        "margin": r.margin,
                    }
                )

    record(initial)
    t = initial.t
    step = initial.step
    t_end = initial.t + config.t_end

    if is_curve:
        curve0: ClosedCurve = initial.surface
        vertices = curve0.vertices.copy()
        closed = curve0.closed
        edges0 = geometry.edge_lengths(curve0)
        length0 = float(edges0.sum())
        min_edge0 = float(edges0.min())
        area0 = geometry.enclosed_area(curve0) if closed else None

        def make_state():
            return FlowState(
                surface=ClosedCurve(vertices=vertices.copy(), closed=closed, time=t),
                step=step,
                t=t,
            )

    else:
        patch0: GraphPatch = initial.surface
        values = patch0.values.copy()

        def make_state():
            return FlowState(
                surface=GraphPatch(
                    center=patch0.center,
                    radius=patch0.radius,
                    spacing=patch0.spacing,
                    values=values.copy(),
                    codim=patch0.codim,
                    time=t,
                ),
                step=step,
                t=t,
            )

    recorded_at = step
    idx_prev = idx_next = None
    while t < t_end:
        try:
            if is_curve:
                if closed:
                    # cached neighbor permutations; invalidated by remesh
                    if idx_next is None or idx_next.shape[0] != vertices.shape[0]:
                        base = np.arange(vertices.shape[0])
                        idx_next = np.roll(base, -1)
                        idx_prev = np.roll(base, 1)
                    nxt = np.take(vertices, idx_next, axis=0)
                    diffs = nxt - vertices
                else:
                    diffs = vertices[1:] - vertices[:-1]
                edges = np.sqrt(
                    diffs[:, 0] * diffs[:, 0] + diffs[:, 1] * diffs[:, 1]
                )
                e_min = float(edges.min())
                e_max = float(edges.max())
                length = float(edges.sum())
                if e_min < EDGE_COLLAPSE or e_max / e_min > EDGE_RATIO_LIMIT:
                    count = _remesh_count(length, vertices.shape[0], config.remesh_spacing)
                    vertices = geometry.resample_curve_raw(vertices, closed, count)
                    trace.events.append(
                        {
                            "event": "remesh",
                            "step": step,
                            "t": t,
                            "min_edge": e_min,
                            "edge_ratio": e_max / e_min if e_min > 0 else float("inf"),
                            "vertex_count": int(vertices.shape[0]),
                        }
                    )
                    if closed:
                        if idx_next.shape[0] != vertices.shape[0]:
                            base = np.arange(vertices.shape[0])
                            idx_next = np.roll(base, -1)
                            idx_prev = np.roll(base, 1)
                        nxt = np.take(vertices, idx_next, axis=0)
                        diffs = nxt - vertices
                    else:
                        diffs = vertices[1:] - vertices[:-1]
                    edges = np.sqrt(
                        diffs[:, 0] * diffs[:, 0] + diffs[:, 1] * diffs[:, 1]
                    )
                    e_min = float(edges.min())
                    length = float(edges.sum())
                area = None
                if closed:
                    x, y = vertices[:, 0], vertices[:, 1]
                    area = abs(float(np.sum(x * nxt[:, 1] - nxt[:, 0] * y))) / 2.0
                extinct = length < EXTINCTION_LENGTH_FACTOR * min_edge0 or (
                    closed and area < EXTINCTION_AREA_FACTOR * area0
                )
                if extinct:
                    trace.events.append(
                        {
                            "event": "extinction",
                            "step": step,
                            "t": t,
                            "length": length,
                            "area": area,
                        }
                    )
                    break
                limit = config.cfl * e_min**2
                dt = config.dt if config.dt is not None else limit
                if dt > limit * (1 + 1e-12):
                    raise StepRejected(
                        f"dt={dt:.3e} exceeds CFL limit {limit:.3e} at step {step}"
                    )
                t_next = t_end if dt >= t_end - t else t + dt
                if t_next == t:
                    trace.events.append(
                        {"event": "stall", "step": step, "t": t, "detail": "dt underflow"}
                    )
                    break
                # inlined kappa*N step; operation order matches _menger
                # exactly so trajectories agree bitwise with step_csf
                if e_min == 0.0:
                    raise GeometryError("repeated vertex in curvature stencil")
                dt_step = t_next - t
                if closed:
                    prv = np.take(vertices, idx_prev, axis=0)
                    a = vertices - prv
                    la = np.take(edges, idx_prev)
                    lb = edges
                    chord = nxt - prv
                    b = diffs
                else:
                    a = diffs[:-1]
                    b = diffs[1:]
                    la = edges[:-1]
                    lb = edges[1:]
                    chord = vertices[2:] - vertices[:-2]
                cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
                lc = np.sqrt(
                    chord[:, 0] * chord[:, 0] + chord[:, 1] * chord[:, 1]
                )
                pos = lc > 0
                lc_safe = np.where(pos, lc, 1.0)
                kap = np.where(pos, 2.0 * cross / (la * lb * lc_safe), 0.0)
                vel_x = kap * -(chord[:, 1] / lc_safe)
                vel_y = kap * (chord[:, 0] / lc_safe)
                if closed:
                    new = np.empty_like(vertices)
                    new[:, 0] = x + dt_step * vel_x
                    new[:, 1] = y + dt_step * vel_y
                else:
                    vel = np.zeros_like(vertices)
                    vel[1:-1, 0] = vel_x
                    vel[1:-1, 1] = vel_y
                    new = vertices + dt_step * vel
                if not np.isfinite(new).all():
                    raise BlowUp(
                        f"non-finite vertices after step of dt={dt_step}"
                    )
                vertices = new
            else:
                limit = graph_cfl_limit(values, patch0.spacing, config.cfl, periodic)
                dt = config.dt if config.dt is not None else limit
                if dt > limit * (1 + 1e-12):
                    raise StepRejected(
                        f"dt={dt:.3e} exceeds CFL limit {limit:.3e} at step {step}"
                    )
                t_next = t_end if dt >= t_end - t else t + dt
                if t_next == t:
                    trace.events.append(
                        {"event": "stall", "step": step, "t": t, "detail": "dt underflow"}
                    )
                    break
                values = _advance_graph(values, patch0.spacing, t_next - t, periodic)
        except StepRejected as exc:
            trace.events.append(
                {"event": "step_rejected", "step": step, "t": t, "detail": str(exc)}
            )
            break
        except (BlowUp, GeometryError) as exc:
            trace.events.append(
                {"event": "blow_up", "step": step, "t": t, "detail": str(exc)}
            )
            break
        step += 1
        t = t_next
        if (step - initial.step) % config.record_stride == 0:
            record(make_state())
            recorded_at = step
    else:
        if config.t_end > 0:
            trace.events.append({"event": "horizon", "step": step, "t": t})

    if recorded_at != step or len(trace.snapshots) == 0:
        record(make_state())
    return trace


# ---------------------------------------------------------------------------
# Run-directory persistence
# ---------------------------------------------------------------------------


def _state_stats(state: FlowState) -> tuple[float, float | None, float]:
    """(measure, max|Df| or None, max|A|) of a snapshot."""
    surf = state.surface
    if isinstance(surf, ClosedCurve):
        _, _, kap = geometry.curve_quantities_all(surf)
        return geometry.total_length(surf), None, float(np.max(np.abs(kap)))
    act = surf.active
    df = geometry.gradient_field(surf)[act]
    d2f = geometry.hessian_field(surf)[act]
    measure = geometry.integrate_over_graph(surf, lambda t, pts: 1.0)
    max_grad = float(np.max(np.linalg.norm(df, axis=-1)))
    max_a = float(np.max(geometry.second_fundamental_norm(df, d2f)))
    return measure, max_grad, max_a


def write_run_dir(trace: FlowTrace, out_dir: str | Path, manifest_extra: dict | None = None) -> Path:
    """Persist a trace: snapshots/NNNN.json, timeseries.csv, events.ndjson,
    and (last, with file checksums) manifest.json."""
    out = Path(out_dir)
    (out / "snapshots").mkdir(parents=True, exist_ok=True)

    files: dict[str, str] = {}
    for i, state in enumerate(trace.snapshots):
        rel = f"snapshots/{i:04d}.json"
        path = out / rel
        path.write_text(geometry.dumps_surface(state.surface) + "\n")
        files[rel] = sha256_file(path)

    monitor_ids = sorted({r.monitor_id for r in trace.reports})
    margins: dict[tuple[int, str], float] = {}
    for r in trace.reports:
        if not r.skipped:
            margins[(round(r.t * 1e12), r.monitor_id)] = r.margin
    header = ["t", "step", "measure", "max_gradient", "max_a"] + [
        f"margin:{mid}" for mid in monitor_ids
    ]
    rows = []
    for state in trace.snapshots:
        measure, max_grad, max_a = _state_stats(state)
        row = [state.t, state.step, measure, max_grad, max_a]
        for mid in monitor_ids:
            row.append(margins.get((round(state.t * 1e12), mid)))
        rows.append(row)
    write_csv(out / "timeseries.csv", header, rows)
    files["timeseries.csv"] = sha256_file(out / "timeseries.csv")

    ev_path = out / "events.ndjson"
    ev_path.write_text("".join(canonical_dumps(e) + "\n" for e in trace.events))
    files["events.ndjson"] = sha256_file(ev_path)

    manifest = {
        "schema_version": 1,
        "config": dataclasses.asdict(trace.config),
        "snapshot_count": len(trace.snapshots),
        "report_count": len(trace.reports),
        "event_count": len(trace.events),
        "files": files,
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    (out / "manifest.json").write_text(canonical_dumps(manifest) + "\n")
    return out
