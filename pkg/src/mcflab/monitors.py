"""Runtime inequality monitors: localized test functions, Gaussian density
ratios, and local height/gradient/curvature bounds.

Every check returns a MonitorReport with margin = bound - value and
pass <=> margin >= -tol.  A check that cannot be evaluated honestly (test
function support leaving the computational domain, graphicality missing,
empty time window) returns a skipped report carrying the reason rather than
a fabricated pass.

The integral identity check supports two integrand forms and both are kept:
  "divergence"  d/dt int(phi) = int(dt phi + div_M(D phi) - |H|^2 phi)
  "transport"   d/dt int(phi) = int(dt phi + H . D phi    - |H|^2 phi)
They coincide for test fields with tangentially divergence-free gradient
(planes, or D phi = 0); on curved surfaces they differ by the first-variation
boundary-free term int(div_M(D phi) + H . D phi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._util import ConfigError, GeometryError
from .geometry import (
    ClosedCurve,
    GraphPatch,
    SurfaceSample,
    curve_quantities_all,
    gradient_field,
    graph_normal,
    hessian_field,
    integrate_over_graph,
    mean_curvature_graph,
    sample_surface,
    second_fundamental_norm,
)

DENSITY_EXCESS_DEFAULT = 0.1
MONO_TOL_REL_DEFAULT = 1e-6
IDENTITY_TOL_REL_DEFAULT = 0.02
KERNEL_TRUNCATION_FACTOR = 6.0


@dataclass(frozen=True)
class MonitorReport:
    """One checked inequality: value <= bound up to tol (margin >= -tol)."""

    monitor_id: str
    t: float
    value: float
    bound: float
    tol: float = 0.0
    skipped: bool = False
    reason: str = ""
    margin: float = field(init=False)
    passed: bool = field(init=False)

    def __post_init__(self):
        margin = self.bound - self.value
        object.__setattr__(self, "margin", margin)
        object.__setattr__(
            self, "passed", bool(not self.skipped and margin >= -self.tol)
        )


def _skipped(monitor_id: str, t: float, reason: str) -> MonitorReport:
    return MonitorReport(
        monitor_id=monitor_id, t=t, value=0.0, bound=0.0, skipped=True, reason=reason
    )


@dataclass(frozen=True)
class KernelPoint:
    """Backward-kernel target (t0, x0); evaluation only for t < t0."""

    t0: float
    x0: tuple

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(c) for c in self.x0))


# ---------------------------------------------------------------------------
# Test functions
# ---------------------------------------------------------------------------


def phi_rho(rho: float, t0: float, x0, t: float, x, n: int | None = None):
    """(1 - rho^-2 (|x-x0|^2 + 2n(t-t0)))_+ ; x ambient, n surface dim."""
    if rho <= 0:
        raise ConfigError("rho must be > 0")
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if n is None:
        n = x.shape[-1] - 1
    d2 = np.sum((x - x0) ** 2, axis=-1)
    return np.maximum(1.0 - (d2 + 2.0 * n * (t - t0)) / rho**2, 0.0)


def heat_kernel(kp: KernelPoint, t: float, x, n: int | None = None):
    """Backward Gaussian (4 pi (t0-t))^(-n/2) exp(|x-x0|^2 / (4(t-t0)))."""
    if t >= kp.t0:
        raise GeometryError(f"heat kernel needs t < t0 = {kp.t0}, got t = {t}")
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(kp.x0, dtype=float)
    if n is None:
        n = x.shape[-1] - 1
    tau = kp.t0 - t
    d2 = np.sum((x - x0) ** 2, axis=-1)
    return (4.0 * math.pi * tau) ** (-n / 2.0) * np.exp(-d2 / (4.0 * tau))


def upsilon(
    form: str,
    t: float,
    x,
    *,
    y0,
    rho: float,
    t1: float = 0.0,
    n: int | None = None,
    r0: float = 0.0,
    lam: float | None = None,
    c1: float = 1.0,
):
    """Localized barrier ((rho^2 - |x-y0|^2) eta - (2n + L rho)(t - t1))_+ .

    Built-in eta forms and their Lipschitz constants L:
      "constant"  eta = 1, L = 0 (recovers the rho^2-scaled paraboloid cutoff)
      "slab"      eta = min(((|x_last| - r0)_+)/2, 1), L = 1/2
      "split"     eta = (1 - (2 c1 lam^n)^-2 (|Q x|^2 + 2n(t-t1)))_+ with Q the
                  projection onto the last two ambient coordinates, L = lam^-2n
    """
    x = np.asarray(x, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    if rho <= 0:
        raise ConfigError("rho must be > 0")
    if n is None:
        n = x.shape[-1] - 1
    if form == "constant":
        eta = np.ones(x.shape[:-1])
        lip = 0.0
    elif form == "slab":
        eta = np.minimum(np.maximum(np.abs(x[..., -1]) - r0, 0.0) / 2.0, 1.0)
        lip = 0.5
    elif form == "split":
        if lam is None or not 0 < lam <= 1:
            raise ConfigError("split form needs lam in (0, 1]")
        if c1 <= 0:
            raise ConfigError("split form needs c1 > 0")
        q2 = x[..., -2] ** 2 + x[..., -1] ** 2
        eta = np.maximum(
            1.0 - (q2 + 2.0 * n * (t - t1)) / (2.0 * c1 * lam**n) ** 2, 0.0
        )
        lip = lam ** (-2 * n)
    else:
        raise ConfigError(f"unknown upsilon form {form!r}")
    d2 = np.sum((x - y0) ** 2, axis=-1)
    return np.maximum((rho**2 - d2) * eta - (2.0 * n + lip * rho) * (t - t1), 0.0)


# ---------------------------------------------------------------------------
# Gaussian density ratio
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DensityReport:
    """Sampled Gaussian density ratio against the 1 + d0 smallness flag."""

    ratio: float
    bound: float
    flagged: bool
    truncation_warning: bool
    radius_used: float
    t: float


def gaussian_density_ratio(
    sample: SurfaceSample, kp: KernelPoint, t: float, d0: float = DENSITY_EXCESS_DEFAULT
) -> DensityReport:
    """Sum of weights * Phi over the sample; flagged when above 1 + d0.

    Warns when the sample reaches less far than 6 sqrt(t0 - t) from x0, where
    the kernel tail is no longer negligible.
    """
    vals = heat_kernel(kp, t, sample.points, n=sample.n)
    ratio = float(np.sum(sample.weights * vals))
    x0 = np.asarray(kp.x0, dtype=float)
    radius_used = float(np.max(np.linalg.norm(sample.points - x0, axis=1)))
    needed = KERNEL_TRUNCATION_FACTOR * math.sqrt(kp.t0 - t)
    return DensityReport(
        ratio=ratio,
        bound=1.0 + d0,
        flagged=ratio > 1.0 + d0,
        truncation_warning=radius_used < needed,
        radius_used=radius_used,
        t=t,
    )


# ---------------------------------------------------------------------------
# Surface integration helpers shared by the checks
# ---------------------------------------------------------------------------


def _integral(state, fn) -> float:
    surf = state.surface
    if isinstance(surf, GraphPatch):
        return integrate_over_graph(surf, fn)
    sample = sample_surface(surf)
    return float(np.sum(sample.weights * np.asarray(fn(state.t, sample.points))))


def _domain_boundary_points(surf) -> np.ndarray | None:
    """Ambient points on the computational boundary; None if there is none."""
    if isinstance(surf, ClosedCurve):
        if surf.closed:
            return None
        return surf.vertices[[0, -1]]
    act = surf.active
    nd = act.ndim
    padded = np.pad(act, 1, constant_values=False)
    core = tuple(slice(1, -1) for _ in range(nd))
    interior = act.copy()
    for axis in range(nd):
        for off in (-1, 1):
            sl = list(core)
            sl[axis] = slice(1 + off, padded.shape[axis] - 1 + off)
            interior &= padded[tuple(sl)]
    boundary = act & ~interior
    return np.concatenate(
        [surf.nodes[boundary], surf.values[boundary][:, None]], axis=1
    )


def _support_exits(state, fn) -> bool:
    pts = _domain_boundary_points(state.surface)
    if pts is None:
        return False
    return bool(np.any(np.asarray(fn(state.t, pts)) > 0.0))


def _ball_measure(state, center, radius: float) -> float:
    sample = sample_surface(state.surface)
    c = np.asarray(center, dtype=float)
    inside = np.linalg.norm(sample.points - c, axis=1) <= radius
    return float(np.sum(sample.weights[inside]))


# ---------------------------------------------------------------------------
# Monotonicity checks
# ---------------------------------------------------------------------------


def _monotonicity_report(
    monitor_id: str, state_a, state_b, fn, tol_rel: float
) -> MonitorReport:
    if _support_exits(state_a, fn) or _support_exits(state_b, fn):
        return _skipped(monitor_id, state_b.t, "support leaves computational domain")
    i_a = _integral(state_a, fn)
    i_b = _integral(state_b, fn)
    return MonitorReport(
        monitor_id=monitor_id,
        t=state_b.t,
        value=i_b - i_a,
        bound=0.0,
        tol=tol_rel * abs(i_a),
    )


def check_phi_monotonicity(
    state_a,
    state_b,
    rho: float,
    t0: float = 0.0,
    x0=None,
    n: int | None = None,
    tol_rel: float = MONO_TOL_REL_DEFAULT,
    monitor_id: str = "phi_monotonicity",
) -> MonitorReport:
    """int phi_rho^3 dmu between two recorded states must not increase."""
    if x0 is None:
        dim = 2 if isinstance(state_a.surface, ClosedCurve) else state_a.surface.n + 1
        x0 = np.zeros(dim)

    def fn(t, pts):
        return phi_rho(rho, t0, x0, t, pts, n) ** 3

    return _monotonicity_report(monitor_id, state_a, state_b, fn, tol_rel)


def check_upsilon_monotonicity(
    state_a,
    state_b,
    form: str,
    *,
    y0,
    rho: float,
    t1: float = 0.0,
    n: int | None = None,
    r0: float = 0.0,
    lam: float | None = None,
    c1: float = 1.0,
    tol_rel: float = MONO_TOL_REL_DEFAULT,
    monitor_id: str | None = None,
) -> MonitorReport:
    """int Upsilon^3 dmu between two recorded states must not increase."""
    mid = monitor_id or f"upsilon_monotonicity[{form}]"

    def fn(t, pts):
        return (
            upsilon(form, t, pts, y0=y0, rho=rho, t1=t1, n=n, r0=r0, lam=lam, c1=c1)
            ** 3
        )

    return _monotonicity_report(mid, state_a, state_b, fn, tol_rel)


# ---------------------------------------------------------------------------
# Measure and height bounds
# ---------------------------------------------------------------------------


def check_measure_bound(
    state_s1,
    state_t,
    y0,
    rho: float,
    monitor_id: str = "measure_bound",
    tol: float = 0.0,
) -> MonitorReport:
    """mu_t(B(y0, rho/2)) <= 8 mu_s1(B(y0, rho)) inside the parabolic window."""
    if rho <= 0:
        raise ConfigError("rho must be > 0")
    surf = state_t.surface
    n = 1 if isinstance(surf, ClosedCurve) else surf.n
    dt = state_t.t - state_s1.t
    if dt < 0:
        return _skipped(monitor_id, state_t.t, "window ends before it starts")
    window = rho**2 / (8.0 * n)
    if dt >= window:
        return _skipped(
            monitor_id,
            state_t.t,
            f"t - s1 = {dt:.3e} outside window {window:.3e}",
        )
    value = _ball_measure(state_t, y0, rho / 2.0)
    bound = 8.0 * _ball_measure(state_s1, y0, rho)
    return MonitorReport(
        monitor_id=monitor_id, t=state_t.t, value=value, bound=bound, tol=tol
    )


def check_height_bound(
    state_t1,
    state_t,
    x0,
    R: float,
    r0: float,
    c_hat: float,
    monitor_id: str = "height_bound",
    tol: float = 0.0,
) -> MonitorReport:
    """Vertical excursion in C(x0, R, R) stays below r0 + c_hat (t-t1)/R.

    Precondition (initial containment in the slab of half-height r0 within
    the ball of radius 2R) is a configuration error when violated.
    """
    if R <= 0 or r0 < 0 or c_hat < 0:
        raise ConfigError("need R > 0, r0 >= 0, c_hat >= 0")
    x0 = np.asarray(x0, dtype=float)
    sample_1 = sample_surface(state_t1.surface)
    dist_1 = np.linalg.norm(sample_1.points - x0, axis=1)
    heights_1 = np.abs(sample_1.points[:, -1] - x0[-1])
    near = dist_1 <= 2.0 * R
    if np.any(heights_1[near] > r0 * (1 + 1e-12) + 1e-15):
        worst = float(np.max(heights_1[near]))
        raise ConfigError(
            f"initial state not inside C(x0, 2R, r0): max height {worst:.6g} > r0 = {r0}"
        )
    sample_t = sample_surface(state_t.surface)
    base = np.linalg.norm(sample_t.points[:, :-1] - x0[:-1], axis=1)
    heights = np.abs(sample_t.points[:, -1] - x0[-1])
    inside = (base <= R) & (heights <= R)
    value = float(np.max(heights[inside])) if np.any(inside) else 0.0
    bound = r0 + c_hat * (state_t.t - state_t1.t) / R
    return MonitorReport(
        monitor_id=monitor_id, t=state_t.t, value=value, bound=bound, tol=tol
    )


# ---------------------------------------------------------------------------
# Gradient and curvature bounds
# ---------------------------------------------------------------------------


def check_gradient_bound_EH(
    state_t1,
    state_t,
    x0,
    rho: float,
    monitor_id: str = "gradient_bound_eh",
    tol: float = 0.0,
) -> MonitorReport:
    """v(t,x) (1 - rho^-2(|x-x0|^2 + 2n(t-t1))) <= sup_{B^n(x0_hat, rho)} v(t1)
    on the shrinking ball B(x0, rho(t)), with v = (nu . e_last)^-1."""
    if rho <= 0:
        raise ConfigError("rho must be > 0")
    x0 = np.asarray(x0, dtype=float)
    surf = state_t.surface
    n = 1 if isinstance(surf, ClosedCurve) else surf.n
    tau = state_t.t - state_t1.t
    if tau < 0:
        return _skipped(monitor_id, state_t.t, "window ends before it starts")
    rho_t_sq = rho**2 - 2.0 * n * tau
    if rho_t_sq <= 0:
        return _skipped(monitor_id, state_t.t, "shrunken ball is empty")

    sample_1 = sample_surface(state_t1.surface)
    base_1 = np.linalg.norm(sample_1.points[:, :-1] - x0[:-1], axis=1)
    sel_1 = base_1 <= rho
    if not np.any(sel_1):
        return _skipped(monitor_id, state_t.t, "no initial samples over the base ball")
    ne_1 = sample_1.normals[sel_1, -1]
    if np.any(ne_1 <= 0):
        return _skipped(monitor_id, state_t.t, "initial state not graphical (nu.e <= 0)")
    bound = float(np.max(1.0 / ne_1))

    sample_t = sample_surface(state_t.surface)
    dist = np.linalg.norm(sample_t.points - x0, axis=1)
    sel_t = dist <= math.sqrt(rho_t_sq)
    if not np.any(sel_t):
        value = 0.0
    else:
        ne_t = sample_t.normals[sel_t, -1]
        if np.any(ne_t <= 0):
            return _skipped(
                monitor_id, state_t.t, "current state not graphical (nu.e <= 0)"
            )
        weight = 1.0 - (dist[sel_t] ** 2 + 2.0 * n * tau) / rho**2
        value = float(np.max(weight / ne_t))
    return MonitorReport(
        monitor_id=monitor_id, t=state_t.t, value=value, bound=bound, tol=tol
    )


def check_curvature_bound_EH(
    states: Sequence,
    x0,
    rho: float,
    c_hat: float,
    monitor_id: str = "curvature_bound_eh",
    tol: float = 0.0,
) -> MonitorReport:
    """max |A|^2 over the final lift of B^n(x0_hat, rho) against
    c_hat ((s-s1)^-1 + rho^-2) sup_{[s1,s]} sup_{B^n(x0_hat, 2 rho)} (1+|Df|^2)^2."""
    if rho <= 0 or c_hat <= 0:
        raise ConfigError("need rho > 0 and c_hat > 0")
    if len(states) < 2:
        return _skipped(monitor_id, states[-1].t if states else 0.0, "window too short")
    x0 = np.asarray(x0, dtype=float)
    s1, s = states[0].t, states[-1].t
    if s <= s1:
        return _skipped(monitor_id, s, "window has zero duration")
    sup_df = 0.0
    for st in states:
        surf = st.surface
        if not isinstance(surf, GraphPatch):
            return _skipped(monitor_id, s, "requires graph states")
        if np.linalg.norm(surf.center - x0[:-1]) + 2 * rho > surf.radius + surf.spacing:
            return _skipped(monitor_id, s, "patch does not cover B(x0, 2 rho)")
        act = surf.active
        base = np.linalg.norm(surf.nodes[act] - x0[:-1], axis=1)
        df = gradient_field(surf)[act]
        sel = base <= 2 * rho
        w = 1.0 + np.sum(df[sel] ** 2, axis=-1)
        sup_df = max(sup_df, float(np.max(w**2)))
    final = states[-1].surface
    act = final.active
    base = np.linalg.norm(final.nodes[act] - x0[:-1], axis=1)
    sel = base <= rho
    df = gradient_field(final)[act][sel]
    d2f = hessian_field(final)[act][sel]
    value = float(np.max(second_fundamental_norm(df, d2f) ** 2))
    bound = c_hat * (1.0 / (s - s1) + 1.0 / rho**2) * sup_df
    return MonitorReport(monitor_id=monitor_id, t=s, value=value, bound=bound, tol=tol)


# ---------------------------------------------------------------------------
# Integral flow identity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TestField:
    """C^2 ambient test field phi(t, x) with its derivatives.

    value/grad/dt/hess take (t, points) with points of shape (N, d) and
    return arrays of shape (N,), (N, d), (N,), (N, d, d).
    """

    value: Callable
    grad: Callable
    dt: Callable
    hess: Callable


def constant_field(c: float = 1.0) -> TestField:
    def zeros_like(pts):
        return np.zeros(np.asarray(pts).shape[0])

    return TestField(
        value=lambda t, pts: np.full(np.asarray(pts).shape[0], float(c)),
        grad=lambda t, pts: np.zeros_like(np.asarray(pts, dtype=float)),
        dt=lambda t, pts: zeros_like(pts),
        hess=lambda t, pts: np.zeros(
            (np.asarray(pts).shape[0],) + (np.asarray(pts).shape[1],) * 2
        ),
    )


def phi_rho_cubed_field(rho: float, t0: float, x0, n: int) -> TestField:
    """phi_rho^3 as a C^2 test field (cubing smooths the truncation kink)."""
    if rho <= 0:
        raise ConfigError("rho must be > 0")
    x0 = np.asarray(x0, dtype=float)

    def base(t, pts):
        d2 = np.sum((np.asarray(pts, dtype=float) - x0) ** 2, axis=-1)
        return np.maximum(1.0 - (d2 + 2.0 * n * (t - t0)) / rho**2, 0.0)

    def value(t, pts):
        return base(t, pts) ** 3

    def dt(t, pts):
        return 3.0 * base(t, pts) ** 2 * (-2.0 * n / rho**2)

    def grad(t, pts):
        pts = np.asarray(pts, dtype=float)
        u = base(t, pts)
        return (3.0 * u**2 * (-2.0 / rho**2))[:, None] * (pts - x0)

    def hess(t, pts):
        pts = np.asarray(pts, dtype=float)
        u = base(t, pts)
        d = pts.shape[1]
        offset = pts - x0
        outer = offset[:, :, None] * offset[:, None, :]
        h = 6.0 * u[:, None, None] * (4.0 / rho**4) * outer
        h += (3.0 * u**2 * (-2.0 / rho**2))[:, None, None] * np.eye(d)
        return h

    return TestField(value=value, grad=grad, dt=dt, hess=hess)


def _identity_pointwise(state):
    """(points, weights, normals, H scalar) for the identity integrand."""
    surf = state.surface
    if "identity_pointwise" in surf._cache:
        return surf._cache["identity_pointwise"]
    if isinstance(surf, GraphPatch):
        act = surf.active
        pts = np.concatenate([surf.nodes[act], surf.values[act][:, None]], axis=1)
        df = gradient_field(surf)[act]
        d2f = hessian_field(surf)[act]
        jac = np.sqrt(1.0 + np.sum(df * df, axis=-1))
        weights = jac * surf.spacing**surf.n
        out = (pts, weights, graph_normal(df), mean_curvature_graph(df, d2f))
    else:
        sample = sample_surface(surf)
        _, nor, kap = curve_quantities_all(surf)
        out = (sample.points, sample.weights, nor, kap)
    surf._cache["identity_pointwise"] = out
    return out


def check_brakke_identity(
    state_a,
    state_b,
    test_field: TestField,
    form: str = "divergence",
    tol_rel: float = IDENTITY_TOL_REL_DEFAULT,
    monitor_id: str | None = None,
) -> MonitorReport:
    """|Delta int(phi) - Delta_t * int(dt phi + (form term) - |H|^2 phi)| small.

    The right side is the trapezoid average of the two window endpoints
    (second-order midpoint value).  form picks the middle term: "divergence"
    uses div_M(D phi) = tr(P D^2 phi) with P the tangent projection;
    "transport" uses H . D phi.
    """
    if form not in ("divergence", "transport"):
        raise ConfigError(f"unknown identity form {form!r}")
    mid = monitor_id or f"brakke_identity[{form}]"
    dt_window = state_b.t - state_a.t
    if dt_window <= 0:
        return _skipped(mid, state_b.t, "window has zero duration")
    if _support_exits(state_a, test_field.value) or _support_exits(
        state_b, test_field.value
    ):
        return _skipped(mid, state_b.t, "support leaves computational domain")

    sides = []
    parts = []
    masses = []
    for state in (state_a, state_b):
        pts, w, nu, h_scalar = _identity_pointwise(state)
        t = state.t
        phi = np.asarray(test_field.value(t, pts), dtype=float)
        dphi = np.asarray(test_field.dt(t, pts), dtype=float)
        grad = np.asarray(test_field.grad(t, pts), dtype=float)
        hess = np.asarray(test_field.hess(t, pts), dtype=float)
        if form == "divergence":
            trace_h = np.einsum("...ii->...", hess)
            nhn = np.einsum("...i,...ij,...j->...", nu, hess, nu)
            middle = trace_h - nhn
        else:
            middle = h_scalar * np.einsum("...i,...i->...", nu, grad)
        integrand = dphi + middle - h_scalar**2 * phi
        sides.append(float(np.sum(w * integrand)))
        parts.append(
            float(np.sum(w * (np.abs(dphi) + np.abs(middle) + np.abs(h_scalar**2 * phi))))
        )
        masses.append(float(np.sum(w * phi)))
    lhs = masses[1] - masses[0]
    rhs = dt_window * (sides[0] + sides[1]) / 2.0
    value = abs(lhs - rhs)
    scale = max(abs(lhs), abs(rhs), dt_window * (parts[0] + parts[1]) / 2.0)
    return MonitorReport(
        monitor_id=mid, t=state_b.t, value=value, bound=tol_rel * scale, tol=0.0
    )


# ---------------------------------------------------------------------------
# Calibration and monitor factories for run_flow
# ---------------------------------------------------------------------------


def calibrate_constant(measure: Callable[[int], float], resolutions: Sequence[int]) -> float:
    """2x the max observed ratio across resolutions (constant calibration)."""
    if len(resolutions) < 3:
        raise ConfigError("calibration needs at least 3 resolutions")
    return 2.0 * max(float(measure(r)) for r in resolutions)


def phi_monotonicity_monitor(rho: float, t0: float = 0.0, x0=None, n: int | None = None,
                             tol_rel: float = MONO_TOL_REL_DEFAULT):
    def monitor(trace, state):
        if len(trace.snapshots) < 2:
            return None
        return check_phi_monotonicity(
            trace.snapshots[-2], state, rho, t0=t0, x0=x0, n=n, tol_rel=tol_rel
        )

    return monitor


def upsilon_monotonicity_monitor(form: str, **kwargs):
    def monitor(trace, state):
        if len(trace.snapshots) < 2:
            return None
        return check_upsilon_monotonicity(trace.snapshots[-2], state, form, **kwargs)

    return monitor


def measure_bound_monitor(y0, rho: float):
    def monitor(trace, state):
        if len(trace.snapshots) < 2:
            return None
        return check_measure_bound(trace.snapshots[0], state, y0, rho)

    return monitor


def gradient_bound_monitor(x0, rho: float):
    def monitor(trace, state):
        if len(trace.snapshots) < 2:
            return None
        return check_gradient_bound_EH(trace.snapshots[0], state, x0, rho)

    return monitor


def brakke_identity_monitor(test_field: TestField, form: str = "divergence",
                            tol_rel: float = IDENTITY_TOL_REL_DEFAULT):
    def monitor(trace, state):
        if len(trace.snapshots) < 2:
            return None
        return check_brakke_identity(
            trace.snapshots[-2], state, test_field, form=form, tol_rel=tol_rel
        )

    return monitor
