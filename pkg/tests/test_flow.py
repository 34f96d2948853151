import math

import numpy as np
import pytest

from mcflab._util import ConfigError
from mcflab.flow import (
    FlowConfig,
    FlowState,
    StepRejected,
    graph_cfl_limit,
    run_flow,
    step_csf,
    step_graph_mcf,
    write_run_dir,
)
from mcflab.geometry import (
    ClosedCurve,
    GraphPatch,
    curves_intersect,
    enclosed_area,
    is_simple,
    total_length,
)
from mcflab.monitors import MonitorReport

from conftest import make_circle


# ---------------------------------------------------------------------------
# Graph stepper
# ---------------------------------------------------------------------------


def _linear_patch(m=33):
    # dyadic coefficients on a dyadic grid: sampling and differencing are
    # exact, so the zero right side is exact too
    return GraphPatch.from_function(
        lambda p: 0.5 * p[..., 0] - 0.25 * p[..., 1] + 0.125,
        center=(0.0, 0.0), radius=1.0, nodes_per_axis=m,
    )


def test_plane_is_stationary():
    state = FlowState(surface=_linear_patch())
    dt = graph_cfl_limit(state.surface.values, state.surface.spacing, 0.2, False)
    out = step_graph_mcf(state, dt)
    assert np.array_equal(out.surface.values, state.surface.values)
    assert out.t == dt and out.step == 1


def test_small_amplitude_mode_decays_like_heat():
    """For |Df| << 1 the graph flow linearizes to the heat equation; the
    lowest Dirichlet mode on [-1, 1] decays at rate (pi/2)^2."""
    eps, t_end = 1e-4, 0.1
    patch = GraphPatch.from_function(
        lambda p: eps * np.cos(0.5 * math.pi * p[..., 0]),
        center=(0.0,), radius=1.0, nodes_per_axis=81,
    )
    trace = run_flow(patch, FlowConfig(t_end=t_end, record_stride=10**9))
    final = trace.final.surface
    decay = math.exp(-((math.pi / 2.0) ** 2) * trace.final.t)
    mid = final.values[final.shape[0] // 2]
    assert math.isclose(float(mid), eps * decay, rel_tol=1e-3)


def test_graph_step_rejects_beyond_cfl():
    state = FlowState(surface=_linear_patch())
    limit = graph_cfl_limit(state.surface.values, state.surface.spacing, 0.2, False)
    with pytest.raises(StepRejected):
        step_graph_mcf(state, 3.0 * limit)


def test_dirichlet_boundary_frozen():
    patch = GraphPatch.from_function(
        lambda p: 0.3 * np.sin(math.pi * p[..., 0]) * np.sin(math.pi * p[..., 1]),
        center=(0.0, 0.0), radius=1.0, nodes_per_axis=25,
    )
    state = FlowState(surface=patch)
    dt = graph_cfl_limit(patch.values, patch.spacing, 0.2, False)
    out = step_graph_mcf(state, dt).surface
    assert np.array_equal(out.values[0, :], patch.values[0, :])
    assert np.array_equal(out.values[-1, :], patch.values[-1, :])
    assert np.array_equal(out.values[:, 0], patch.values[:, 0])
    assert np.array_equal(out.values[:, -1], patch.values[:, -1])
    assert not np.array_equal(out.values[1:-1, 1:-1], patch.values[1:-1, 1:-1])


def test_step_requires_matching_surface():
    with pytest.raises(ConfigError):
        step_graph_mcf(FlowState(surface=make_circle()), 1e-4)
    with pytest.raises(ConfigError):
        step_csf(FlowState(surface=_linear_patch()), 1e-4)


# ---------------------------------------------------------------------------
# Curve stepper
# ---------------------------------------------------------------------------


def test_circle_step_is_exactly_radial():
    """Co-circular stencils give kappa = 1/r and radial normals, so one Euler
    step maps the regular m-gon to the regular m-gon of radius r - dt/r."""
    r, m, dt = 1.0, 128, 1e-4
    state = FlowState(surface=make_circle(radius=r, m=m))
    out = step_csf(state, dt)
    radii = np.linalg.norm(out.surface.vertices, axis=1)
    assert np.allclose(radii, r - dt / r, rtol=1e-12, atol=1e-14)


def test_circle_extinction_time():
    r = 0.6
    trace = run_flow(make_circle(radius=r, m=128),
                     FlowConfig(t_end=1.0, record_stride=64))
    T = trace.extinction_time
    assert T is not None
    assert math.isclose(T, r * r / 2.0, rel_tol=1e-2)
    assert not trace.events_of("horizon")


def test_circle_radius_tracks_exact_law():
    r0 = 0.6
    trace = run_flow(make_circle(radius=r0, m=128),
                     FlowConfig(t_end=1.0, record_stride=32))
    T = r0 * r0 / 2.0
    for snap in trace.snapshots:
        if snap.t > 0.8 * T:
            break
        radius = float(np.linalg.norm(snap.surface.vertices, axis=1).mean())
        assert math.isclose(radius, math.sqrt(r0 * r0 - 2.0 * snap.t),
                            rel_tol=5e-3)


def test_convex_area_decreases_at_2pi():
    th = 2.0 * np.pi * np.arange(256) / 256
    ellipse = ClosedCurve(np.stack([np.cos(th), 0.6 * np.sin(th)], axis=1))
    trace = run_flow(ellipse, FlowConfig(t_end=0.05, record_stride=16))
    t0, t1 = trace.snapshots[0].t, trace.snapshots[-1].t
    a0 = enclosed_area(trace.snapshots[0].surface)
    a1 = enclosed_area(trace.snapshots[-1].surface)
    rate = (a0 - a1) / (t1 - t0)
    assert math.isclose(rate, 2.0 * math.pi, rel_tol=5e-3)


def test_flow_preserves_simplicity_and_embedding():
    th = 2.0 * np.pi * np.arange(200) / 200
    wavy = ClosedCurve(np.stack([(1 + 0.2 * np.cos(5 * th)) * np.cos(th),
                                 (1 + 0.2 * np.cos(5 * th)) * np.sin(th)], axis=1))
    trace = run_flow(wavy, FlowConfig(t_end=0.08, record_stride=50))
    assert not trace.events_of("non_simple")
    assert all(is_simple(s.surface) for s in trace.snapshots)


def test_disjoint_flows_stay_disjoint():
    inner = make_circle(radius=0.5, m=128)
    th = 2.0 * np.pi * np.arange(192) / 192
    outer = ClosedCurve(np.stack([1.2 * np.cos(th) + 0.1,
                                  1.0 * np.sin(th)], axis=1))
    cfg = FlowConfig(t_end=0.1, dt=2e-5, record_stride=500)
    tr_in = run_flow(inner, cfg)
    tr_out = run_flow(outer, cfg)
    paired = zip(tr_in.snapshots, tr_out.snapshots)
    for a, b in paired:
        if abs(a.t - b.t) > 1e-12:
            break
        assert not curves_intersect(a.surface, b.surface)


# ---------------------------------------------------------------------------
# Driver replay parity: run_flow advances by the realized step t_next - t,
# so replaying recorded times through the single-steppers is bit-identical.
# ---------------------------------------------------------------------------


def test_run_flow_matches_step_csf_closed():
    th = 2.0 * np.pi * np.arange(96) / 96
    curve = ClosedCurve(np.stack([(1 + 0.1 * np.sin(3 * th)) * np.cos(th),
                                  (1 + 0.1 * np.sin(3 * th)) * np.sin(th)], axis=1))
    trace = run_flow(curve, FlowConfig(t_end=0.002, record_stride=1))
    assert not trace.events_of("remesh")
    state = trace.snapshots[0]
    for snap in trace.snapshots[1:]:
        state = step_csf(state, snap.t - state.t)
        assert np.array_equal(state.surface.vertices, snap.surface.vertices)
        assert state.t == snap.t


def test_run_flow_matches_step_csf_open():
    x = np.linspace(-1.0, 1.0, 64)
    curve = ClosedCurve(np.stack([x, 0.3 * np.cos(0.5 * math.pi * x)], axis=1),
                        closed=False)
    trace = run_flow(curve, FlowConfig(t_end=0.001, record_stride=1))
    assert not trace.events_of("remesh")
    state = trace.snapshots[0]
    for snap in trace.snapshots[1:]:
        state = step_csf(state, snap.t - state.t)
        assert np.array_equal(state.surface.vertices, snap.surface.vertices)
    # endpoints never move
    assert np.array_equal(trace.final.surface.vertices[[0, -1]],
                          curve.vertices[[0, -1]])


def test_run_flow_matches_step_graph():
    patch = GraphPatch.from_function(
        lambda p: 0.2 * np.cos(0.5 * math.pi * p[..., 0]),
        center=(0.0,), radius=1.0, nodes_per_axis=41,
    )
    trace = run_flow(patch, FlowConfig(t_end=0.004, record_stride=1))
    state = trace.snapshots[0]
    for snap in trace.snapshots[1:]:
        state = step_graph_mcf(state, snap.t - state.t)
        assert np.array_equal(state.surface.values, snap.surface.values)


# ---------------------------------------------------------------------------
# Events
# ---------------------------------------------------------------------------


def test_remesh_event_restores_edge_ratio():
    th = 2.0 * np.pi * np.arange(64) / 64
    # cluster parameterization: edge lengths vary by ~e^2 > ratio limit
    s = th + 0.9 * np.sin(th)
    curve = ClosedCurve(np.stack([np.cos(s), np.sin(s)], axis=1))
    trace = run_flow(curve, FlowConfig(t_end=1e-5, record_stride=1))
    events = trace.events_of("remesh")
    assert events and events[0]["edge_ratio"] > 4.0
    final = trace.final.surface
    from mcflab.geometry import edge_lengths

    e = edge_lengths(final)
    assert float(e.max() / e.min()) < 4.0


def test_remesh_spacing_controls_vertex_count():
    th = 2.0 * np.pi * np.arange(64) / 64
    s = th + 0.9 * np.sin(th)
    curve = ClosedCurve(np.stack([np.cos(s), np.sin(s)], axis=1))
    spacing = 2.0 * math.pi / 200.0
    trace = run_flow(curve, FlowConfig(t_end=1e-5, record_stride=1,
                                       remesh_spacing=spacing))
    counts = {e["vertex_count"] for e in trace.events_of("remesh")}
    assert counts and all(abs(c - 200) <= 2 for c in counts)


def test_horizon_event_when_no_extinction():
    trace = run_flow(make_circle(radius=1.0, m=64),
                     FlowConfig(t_end=1e-4, record_stride=10))
    assert trace.events_of("horizon")
    assert trace.extinction_time is None
    assert trace.final.t >= 1e-4


def test_step_rejected_event_terminates():
    trace = run_flow(make_circle(radius=1.0, m=64),
                     FlowConfig(t_end=0.1, dt=0.05))
    ev = trace.events_of("step_rejected")
    assert len(ev) == 1 and "CFL" in ev[0]["detail"]
    assert trace.final.t == 0.0


def test_monitor_wiring_and_failure_events():
    calls = []

    def failing_monitor(trace, state):
        calls.append(state.t)
        return MonitorReport(monitor_id="always_bad", t=state.t, value=2.0,
                             bound=1.0)

    def quiet_monitor(trace, state):
        return None

    def list_monitor(trace, state):
        return [MonitorReport(monitor_id="a_ok", t=state.t, value=0.0,
                              bound=1.0)]

    trace = run_flow(make_circle(radius=0.5, m=64),
                     FlowConfig(t_end=1e-3, record_stride=5),
                     monitors=[failing_monitor, quiet_monitor, list_monitor])
    n_records = len(trace.snapshots)
    assert len(calls) == n_records
    fails = trace.events_of("monitor_failure")
    assert len(fails) == n_records
    assert all(e["monitor_id"] == "always_bad" for e in fails)
    # reports of one record are sorted by monitor id
    per_record = trace.reports[:2]
    assert [r.monitor_id for r in per_record] == ["a_ok", "always_bad"]


# ---------------------------------------------------------------------------
# Config validation
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        {"t_end": -1.0},
        {"t_end": math.nan},
        {"t_end": 1.0, "dt": 0.0},
        {"t_end": 1.0, "cfl": 0.0},
        {"t_end": 1.0, "cfl": 0.3},
        {"t_end": 1.0, "boundary": "free"},
        {"t_end": 1.0, "record_stride": 0},
        {"t_end": 1.0, "remesh_spacing": 0.0},
    ],
)
def test_flow_config_validation(kwargs):
    with pytest.raises(ConfigError):
        FlowConfig(**kwargs)


def test_flow_state_requires_surface():
    with pytest.raises(ConfigError):
        FlowState(surface=np.zeros((8, 2)))


# ---------------------------------------------------------------------------
# Run-directory persistence
# ---------------------------------------------------------------------------


def test_write_run_dir_deterministic(tmp_path):
    def run_once(dest):
        trace = run_flow(make_circle(radius=0.4, m=96),
                         FlowConfig(t_end=0.02, record_stride=25))
        write_run_dir(trace, dest)
        return dest

    a = run_once(tmp_path / "a")
    b = run_once(tmp_path / "b")
    for rel in ("timeseries.csv", "events.ndjson"):
        assert (a / rel).read_bytes() == (b / rel).read_bytes()
    snaps_a = sorted(p.name for p in (a / "snapshots").iterdir())
    snaps_b = sorted(p.name for p in (b / "snapshots").iterdir())
    assert snaps_a == snaps_b
    for name in snaps_a:
        assert (a / "snapshots" / name).read_bytes() == \
            (b / "snapshots" / name).read_bytes()


def test_run_dir_layout_and_manifest(tmp_path):
    trace = run_flow(make_circle(radius=0.4, m=64),
                     FlowConfig(t_end=0.01, record_stride=20))
    out = write_run_dir(trace, tmp_path / "run")
    assert (out / "manifest.json").is_file()
    assert (out / "timeseries.csv").is_file()
    assert (out / "events.ndjson").is_file()
    import json

    from mcflab._util import sha256_file

    manifest = json.loads((out / "manifest.json").read_text())
    inv = manifest["files"]
    on_disk = {p.relative_to(out).as_posix()
               for p in out.rglob("*") if p.is_file()} - {"manifest.json"}
    assert set(inv) == on_disk
    for rel, digest in inv.items():
        assert sha256_file(out / rel) == digest
