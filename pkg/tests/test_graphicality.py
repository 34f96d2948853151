import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcflab._util import ConfigError
from mcflab.flow import FlowState
from mcflab.geometry import ClosedCurve, Cylinder, GraphPatch, sample_surface
from mcflab.graphicality import (
    curve_probe_parity_violations,
    first_graphical_time,
    first_nongraphical_time,
    graph_report_to_json,
    is_graphical,
    native_resolution,
)

from conftest import make_circle


def _sine_patch(amp=0.3, freq=2.0, radius=2.0, m=513):
    return GraphPatch.from_function(
        lambda p: amp * np.sin(freq * p[..., 0]),
        center=(0.0,), radius=radius, nodes_per_axis=m,
    )


# ---------------------------------------------------------------------------
# Closed-curve probing
# ---------------------------------------------------------------------------


def test_flat_edge_is_exactly_graphical():
    verts = [(-5.0, 0.0), (-2.5, 0.0), (0.0, 0.0), (2.5, 0.0), (5.0, 0.0),
             (5.0, 4.0), (0.0, 4.0), (-5.0, 4.0)]
    curve = ClosedCurve(vertices=np.asarray(verts))
    rep = is_graphical(curve, Cylinder((0.0, 0.0), 1.0, 1.0), delta=0.25)
    assert rep.graphical and rep.sheet_count == 1
    assert rep.sup_height == 0.0 and rep.sup_grad == 0.0
    assert rep.graph is not None and rep.witness is None


def test_circle_band_miss_gives_gap_witness():
    curve = make_circle(radius=2.0, m=2048)
    rep = is_graphical(curve, Cylinder((0.0, 0.0), 1.0, 1.0))
    # both arcs clear the band |y| <= 1 over the base, so every column is empty
    assert not rep.graphical and rep.sheet_count == 0
    assert rep.witness["kind"] == "gap"
    doc = graph_report_to_json(rep)
    assert doc["graphical"] is False and doc["witness"]["kind"] == "gap"


def test_circle_lower_arc_sups_match_closed_forms():
    curve = make_circle(radius=2.0, m=2048)
    rep = is_graphical(curve, Cylinder((0.0, -2.0), 1.0, 1.0))
    assert rep.graphical and rep.sheet_count == 1
    # arc height over the band center and slope at the base edge
    assert rep.sup_height == pytest.approx(2.0 - math.sqrt(3.0), rel=1.5e-2)
    assert rep.sup_grad == pytest.approx(1.0 / math.sqrt(3.0), rel=1.5e-2)


def test_small_circle_double_cover_witness():
    curve = make_circle(radius=0.5, m=512)
    rep = is_graphical(curve, Cylinder((0.0, 0.0), 1.0, 1.0))
    assert not rep.graphical and rep.sheet_count == 2
    w = rep.witness
    assert w["kind"] == "multi" and w["count"] == 2
    p = w["base_point"][0]
    expect = math.sqrt(0.25 - p * p)
    assert w["heights"] == pytest.approx([-expect, expect], abs=1e-4)


def test_vertical_jog_gives_tangency_witness():
    verts = [(-1.0, 0.0), (-0.5, 0.0), (0.0, 0.0), (0.0, 0.4), (0.5, 0.4),
             (1.0, 0.4), (1.0, 5.0), (-1.0, 5.0)]
    curve = ClosedCurve(vertices=np.asarray(verts))
    rep = is_graphical(curve, Cylinder((0.0, 0.2), 1.0, 0.5))
    assert not rep.graphical
    assert rep.witness["kind"] == "tangency"


def test_extracted_graph_lies_on_the_curve():
    curve = make_circle(radius=2.0, m=2048)
    rep = is_graphical(curve, Cylinder((0.0, -2.0), 1.0, 1.0))
    patch = rep.graph
    xs = patch.center[0] - patch.radius + patch.spacing * np.arange(patch.shape[0])
    radii = np.hypot(xs, patch.values)
    # extraction error is bounded by the chord sag of the 2048-gon
    assert np.max(np.abs(radii - 2.0)) < 1e-5


@settings(max_examples=60, deadline=None)
@given(
    st.integers(min_value=8, max_value=128),
    st.floats(min_value=0.2, max_value=3.0, allow_nan=False),
    st.floats(min_value=-1.5, max_value=1.5, allow_nan=False),
    st.floats(min_value=-1.5, max_value=1.5, allow_nan=False),
    st.floats(min_value=0.1, max_value=2.5, allow_nan=False),
)
def test_closed_curve_parity_is_even(m, r, cx, cy, cr):
    curve = make_circle(radius=r, m=m)
    assert curve_probe_parity_violations(
        curve, Cylinder((cx, cy), cr, 1.0)) == 0


# ---------------------------------------------------------------------------
# Graph-patch and sample probing
# ---------------------------------------------------------------------------


def test_patch_probe_recovers_amplitude_and_slope():
    patch = _sine_patch()
    rep = is_graphical(patch, Cylinder((0.0, 0.0), 1.5, 1.0))
    assert rep.graphical and rep.sheet_count == 1
    assert rep.sup_height == pytest.approx(0.3, rel=1e-2)
    assert rep.sup_grad == pytest.approx(0.6, rel=1e-2)
    # probing at the native step lands on the nodes, so second differences
    # see the underlying function rather than the interpolant's kinks
    aligned = is_graphical(patch, Cylinder((0.0, 0.0), 1.5, 1.0),
                           delta=patch.spacing)
    assert aligned.sup_hess == pytest.approx(1.2, rel=1e-2)


def test_patch_probe_gap_outside_coverage():
    patch = _sine_patch(radius=1.0, m=257)
    rep = is_graphical(patch, Cylinder((0.0, 0.0), 1.5, 1.0))
    assert not rep.graphical and rep.witness["kind"] == "gap"
    # the uncovered column sits beyond the patch footprint
    assert abs(rep.witness["base_point"][0]) > 1.0


def test_patch_probe_height_exit_is_gap():
    patch = _sine_patch(amp=1.0, freq=1.0, radius=2.0)
    rep = is_graphical(patch, Cylinder((0.0, 0.0), 1.8, 0.5))
    assert not rep.graphical and rep.witness["kind"] == "gap"


def test_sample_probe_matches_curve_probe():
    curve = make_circle(radius=2.0, m=4096)
    samp = sample_surface(curve)
    cyl = Cylinder((0.0, -2.0), 1.0, 1.0)
    rep = is_graphical(samp, cyl)
    assert rep.graphical
    assert rep.sup_height == pytest.approx(2.0 - math.sqrt(3.0), rel=5e-2)


def test_delta_defaults_and_validation():
    patch = _sine_patch()
    native = native_resolution(patch)
    assert native == patch.spacing
    rep = is_graphical(patch, Cylinder((0.0, 0.0), 1.0, 1.0))
    assert rep.delta <= native / 2 * (1 + 1e-12)
    with pytest.raises(ConfigError):
        is_graphical(patch, Cylinder((0.0, 0.0), 1.0, 1.0), delta=2 * native)
    with pytest.raises(ConfigError):
        is_graphical(patch, Cylinder((0.0, 0.0), 1.0, 1.0), delta=0.0)


def test_empty_cylinder_reports_nongraphical():
    rep = is_graphical(_sine_patch(), Cylinder((0.0, 0.0), 0.0, 1.0))
    assert not rep.graphical and rep.witness["kind"] == "gap"


# ---------------------------------------------------------------------------
# First-crossing times over recorded traces
# ---------------------------------------------------------------------------


def _fake_trace(flags, cyl):
    good = make_circle(radius=2.0, m=256, center=(0.0, 2.0))
    bad = make_circle(radius=0.5, m=256)
    assert is_graphical(good, cyl).graphical
    assert not is_graphical(bad, cyl).graphical
    snaps = [
        FlowState(surface=good if f else bad, step=i, t=0.1 * i)
        for i, f in enumerate(flags)
    ]
    return SimpleNamespace(snapshots=snaps)


def test_first_nongraphical_time():
    cyl = Cylinder((0.0, 0.0), 1.0, 1.0)
    trace = _fake_trace([True, True, False, True], cyl)
    assert first_nongraphical_time(trace, cyl) == pytest.approx(0.2)
    always = _fake_trace([True, True], cyl)
    assert first_nongraphical_time(always, cyl) is None


def test_first_graphical_time_hold_semantics():
    cyl = Cylinder((0.0, 0.0), 1.0, 1.0)
    # a single good record followed by a relapse does not count as settled
    trace = _fake_trace([False, True, False, True, True], cyl)
    assert first_graphical_time(trace, cyl, hold=2) == pytest.approx(0.3)
    # a good tail shorter than hold still settles when it reaches the end
    tail = _fake_trace([False, True], cyl)
    assert first_graphical_time(tail, cyl, hold=5) == pytest.approx(0.1)
    never = _fake_trace([False, False], cyl)
    assert first_graphical_time(never, cyl, hold=2) is None
