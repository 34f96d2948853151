"""Discrete graphs and curves with their differential-geometric quantities.

A hypersurface given as graph(f) over a ball is sampled on a uniform tensor
grid (GraphPatch); a closed plane curve is a polyline (ClosedCurve).  All
derivative quantities use second-order stencils: central in the interior,
one-sided at the grid boundary.  Integrals use the graph Jacobian
sqrt(1 + |Df|^2) (codimension 1) on active nodes only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._util import GeometryError, ValidationError, canonical_dumps

SCHEMA_VERSION = 1

# Unit-normal and orthogonality round-off budgets.
NORMAL_UNIT_TOL = 1e-14
NORMAL_WEIGHT_TOL = 1e-12


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cylinder:
    """C(a, r, h) = B^n(a_hat, r) x B^k(a_tilde, h) in R^{n+k}.

    The last `codim` coordinates of `center` are the height block.
    r = 0 or h = 0 gives the empty cylinder.
    """

    center: tuple
    radius: float
    height: float
    codim: int = 1

    def __post_init__(self):
        if self.radius < 0 or self.height < 0:
            raise GeometryError("cylinder radius and height must be >= 0")
        if not 1 <= self.codim < len(self.center):
            raise GeometryError("codim must be in [1, ambient_dim)")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def base_center(self) -> np.ndarray:
        return np.asarray(self.center[: -self.codim], dtype=float)

    @property
    def height_center(self) -> np.ndarray:
        return np.asarray(self.center[-self.codim :], dtype=float)

    @property
    def base_dim(self) -> int:
        return len(self.center) - self.codim

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask: which ambient points lie in the closed cylinder."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        base = pts[:, : self.base_dim] - self.base_center
        top = pts[:, self.base_dim :] - self.height_center
        ok = (np.linalg.norm(base, axis=1) <= self.radius) & (
            np.linalg.norm(top, axis=1) <= self.height
        )
        return ok if np.asarray(points).ndim > 1 else ok[0]


@dataclass(frozen=True)
class GraphPatch:
    """Scalar field f sampled on the uniform grid covering B^n(center, radius).

    node(i) = center - radius*1 + spacing*i componentwise.  Nodes of the
    bounding box outside the closed ball are inactive: they carry values (so
    stencils stay uniform) but are excluded from integrals and samples.
    """

    center: np.ndarray
    radius: float
    spacing: float
    values: np.ndarray
    codim: int = 1
    time: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        center = np.atleast_1d(np.asarray(self.center, dtype=float))
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "values", values)
        if self.spacing <= 0:
            raise GeometryError("spacing must be > 0")
        if self.radius <= 0:
            raise GeometryError("radius must be > 0")
        if self.codim != 1:
            raise GeometryError("solver supports codimension 1 only")
        n = center.size
        if values.ndim != n:
            raise GeometryError(f"values must be {n}-dimensional, got {values.ndim}")
        m = values.shape[0]
        if any(s != m for s in values.shape):
            raise GeometryError("grid must have the same node count per axis")
        span = (m - 1) * self.spacing
        # grid must cover the ball's bounding box to within one spacing
        # (periodic layouts stop one node short of the far face)
        if span > 2 * self.radius * (1 + 1e-12) + 1e-15:
            raise GeometryError("grid extends beyond the bounding box")
        if 2 * self.radius - span > self.spacing * (1 + 1e-12):
            raise GeometryError("grid does not cover the ball")
        act = self.active
        for axis in range(n):
            counts = act.any(axis=tuple(a for a in range(n) if a != axis))
            if int(np.count_nonzero(counts)) < 8:
                raise GeometryError("need at least 8 active nodes per axis")
        if not np.isfinite(values[act]).all():
            raise GeometryError("active nodes must carry finite values")

    @property
    def n(self) -> int:
        return self.center.size

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def axes(self) -> list[np.ndarray]:
        """Per-axis node coordinates."""
        if "axes" not in self._cache:
            m = self.shape[0]
            self._cache["axes"] = [
                self.center[i] - self.radius + self.spacing * np.arange(m)
                for i in range(self.n)
            ]
        return self._cache["axes"]

    @property
    def nodes(self) -> np.ndarray:
        """Base-space node coordinates, shape grid + (n,)."""
        if "nodes" not in self._cache:
            mesh = np.meshgrid(*self.axes, indexing="ij")
            self._cache["nodes"] = np.stack(mesh, axis=-1)
        return self._cache["nodes"]

    @property
    def active(self) -> np.ndarray:
        """Mask of nodes inside the closed ball B^n(center, radius)."""
        if "active" not in self._cache:
            d = np.linalg.norm(self.nodes - self.center, axis=-1)
            self._cache["active"] = d <= self.radius * (1 + 1e-12)
        return self._cache["active"]

    @classmethod
    def from_function(
        cls,
        fn: Callable[[np.ndarray], np.ndarray],
        center: Sequence[float],
        radius: float,
        nodes_per_axis: int,
        time: float = 0.0,
        endpoint: bool = True,
    ) -> "GraphPatch":
        """Sample fn(points) on the grid; endpoint=False gives the periodic
        layout where the far face is the wrap-around image of the near face."""
        center = np.atleast_1d(np.asarray(center, dtype=float))
        m = int(nodes_per_axis)
        h = 2 * radius / (m - 1) if endpoint else 2 * radius / m
        axes = [center[i] - radius + h * np.arange(m) for i in range(center.size)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        vals = np.asarray(fn(mesh), dtype=float)
        return cls(center=center, radius=radius, spacing=h, values=vals, time=time)


@dataclass(frozen=True)
class ClosedCurve:
    """Polyline in R^2; closed joins the last vertex back to the first.

    Simplicity (no self-intersections) is required at construction and can be
    re-checked on demand with is_simple(); flow steps do not re-check it.
    """

    vertices: np.ndarray
    closed: bool = True
    time: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        object.__setattr__(self, "vertices", v)
        if v.ndim != 2 or v.shape[1] != 2:
            raise GeometryError("vertices must have shape (m, 2)")
        if v.shape[0] < 8:
            raise GeometryError("need at least 8 vertices")
        if not np.isfinite(v).all():
            raise GeometryError("vertices must be finite")
        edges = edge_lengths(self)
        if np.any(edges == 0.0):
            raise GeometryError("consecutive vertices must be distinct")
        if edges.sum() <= 0:
            raise GeometryError("total length must be > 0")

    @property
    def m(self) -> int:
        return self.vertices.shape[0]


@dataclass(frozen=True)
class SurfaceSample:
    """Quadrature view of a surface: points, unit normals, |A|, weights."""

    points: np.ndarray
    normals: np.ndarray
    a_norm: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        nrm = np.asarray(self.normals, dtype=float)
        a = np.asarray(self.a_norm, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        for name, arr in (("points", pts), ("normals", nrm), ("a_norm", a), ("weights", w)):
            object.__setattr__(self, name, arr)
        if pts.shape != nrm.shape or a.shape != w.shape or a.shape[0] != pts.shape[0]:
            raise GeometryError("sample arrays must have matching lengths")
        lengths = np.linalg.norm(nrm, axis=1)
        if np.any(np.abs(lengths - 1.0) > NORMAL_WEIGHT_TOL):
            raise GeometryError("normals must be unit length within 1e-12")
        if np.any(w <= 0):
            raise GeometryError("weights must be > 0")

    @property
    def n(self) -> int:
        """Surface dimension (codimension-1 samples)."""
        return self.points.shape[1] - 1

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())


# ---------------------------------------------------------------------------
# Stencils on graph patches
# ---------------------------------------------------------------------------


def _d1(values: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    if periodic:
        return (np.roll(values, -1, axis) - np.roll(values, 1, axis)) / (2 * h)
    return np.gradient(values, h, axis=axis, edge_order=2)


def _d2(values: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    if periodic:
        return (np.roll(values, -1, axis) - 2 * values + np.roll(values, 1, axis)) / h**2
    out = np.empty_like(values)
    fwd = [slice(None)] * values.ndim

    def sl(*idx):
        s = list(fwd)
        s[axis] = idx[0] if len(idx) == 1 else slice(*idx)
        return tuple(s)

    out[sl(1, -1)] = (
        values[sl(2, None)] - 2 * values[sl(1, -1)] + values[sl(0, -2)]
    ) / h**2
    out[sl(0)] = (
        2 * values[sl(0)] - 5 * values[sl(1)] + 4 * values[sl(2)] - values[sl(3)]
    ) / h**2
    out[sl(-1)] = (
        2 * values[sl(-1)] - 5 * values[sl(-2)] + 4 * values[sl(-3)] - values[sl(-4)]
    ) / h**2
    return out


def gradient_raw(values: np.ndarray, h: float, periodic: bool = False) -> np.ndarray:
    return np.stack(
        [_d1(values, h, a, periodic) for a in range(values.ndim)], axis=-1
    )


def hessian_raw(values: np.ndarray, h: float, periodic: bool = False) -> np.ndarray:
    n = values.ndim
    out = np.empty(values.shape + (n, n))
    grads = gradient_raw(values, h, periodic)
    for i in range(n):
        out[..., i, i] = _d2(values, h, i, periodic)
        for j in range(i + 1, n):
            mixed = _d1(grads[..., i], h, j, periodic)
            out[..., i, j] = mixed
            out[..., j, i] = mixed
    return out


def gradient_field(patch: GraphPatch, periodic: bool = False) -> np.ndarray:
    """Df on all nodes, shape grid + (n,)."""
    key = ("grad", periodic)
    if key not in patch._cache:
        patch._cache[key] = gradient_raw(patch.values, patch.spacing, periodic)
    return patch._cache[key]


def hessian_field(patch: GraphPatch, periodic: bool = False) -> np.ndarray:
    """D^2 f on all nodes, shape grid + (n, n); symmetric by construction."""
    key = ("hess", periodic)
    if key not in patch._cache:
        patch._cache[key] = hessian_raw(patch.values, patch.spacing, periodic)
    return patch._cache[key]


def _check_node(patch: GraphPatch, node) -> tuple:
    idx = tuple(int(i) for i in np.atleast_1d(node))
    if len(idx) != patch.n:
        raise GeometryError(f"node index must have {patch.n} components")
    if any(not 0 <= i < patch.shape[a] for a, i in enumerate(idx)):
        raise GeometryError(f"node {idx} outside grid")
    if not patch.active[idx]:
        raise GeometryError(f"node {idx} is inactive (outside the ball)")
    return idx


def gradient(patch: GraphPatch, node) -> np.ndarray:
    """Df at one active node (second-order; one-sided at the grid boundary)."""
    return gradient_field(patch)[_check_node(patch, node)].copy()


def hessian(patch: GraphPatch, node) -> np.ndarray:
    """D^2 f at one active node; symmetric n x n."""
    return hessian_field(patch)[_check_node(patch, node)].copy()


# ---------------------------------------------------------------------------
# Pointwise graph quantities (vectorized over leading axes)
# ---------------------------------------------------------------------------


def graph_normal(df: np.ndarray) -> np.ndarray:
    """Upward unit normal (-Df, 1)/sqrt(1+|Df|^2) of graph(f)."""
    df = np.asarray(df, dtype=float)
    if not np.isfinite(df).all():
        raise GeometryError("Df must be finite")
    scalar = df.ndim == 1
    d = np.atleast_2d(df)
    denom = np.sqrt(1.0 + np.sum(d * d, axis=-1, keepdims=True))
    out = np.concatenate([-d, np.ones(d.shape[:-1] + (1,))], axis=-1) / denom
    return out[0] if scalar else out.reshape(df.shape[:-1] + (df.shape[-1] + 1,))


def tilt(df: np.ndarray) -> np.ndarray:
    """|Df|^2/(1+|Df|^2) = 1 - (nu . e_{n+1})^2, in [0, 1)."""
    df = np.asarray(df, dtype=float)
    if not np.isfinite(df).all():
        raise GeometryError("Df must be finite")
    s = np.sum(df * df, axis=-1)
    return s / (1.0 + s)


def _metric_inverse(df: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(g^{-1}, 1+|Df|^2) for the induced metric g = I + Df Df^T."""
    df = np.asarray(df, dtype=float)
    w = 1.0 + np.sum(df * df, axis=-1)
    n = df.shape[-1]
    eye = np.eye(n)
    ginv = eye - df[..., :, None] * df[..., None, :] / w[..., None, None]
    return ginv, w


def second_fundamental_norm(df: np.ndarray, d2f: np.ndarray) -> np.ndarray:
    """Exact |A| of graph(f): |A|^2 = tr((g^{-1} D^2f)^2) / (1+|Df|^2)."""
    d2f = np.asarray(d2f, dtype=float)
    if not (np.isfinite(np.asarray(df)).all() and np.isfinite(d2f).all()):
        raise GeometryError("inputs must be finite")
    ginv, w = _metric_inverse(df)
    b = np.einsum("...ij,...jk->...ik", ginv, d2f)
    a2 = np.einsum("...ij,...ji->...", b, b) / w
    return np.sqrt(np.maximum(a2, 0.0))


def curvature_sandwich_bounds(df: np.ndarray, d2f: np.ndarray) -> tuple:
    """Explicit two-sided bounds |D2f|^2/(1+|Df|^2)^3 <= |A|^2 <= |D2f|^2.

    Both constants are 1 for codimension 1; returned as (lower, upper) so the
    inequality can be asserted with the constants in the open.
    """
    d2f = np.asarray(d2f, dtype=float)
    w = 1.0 + np.sum(np.asarray(df, dtype=float) ** 2, axis=-1)
    h2 = np.sum(d2f * d2f, axis=(-2, -1))
    return h2 / w**3, h2


def mean_curvature_graph(df: np.ndarray, d2f: np.ndarray) -> np.ndarray:
    """Scalar mean curvature of graph(f); the curvature vector is H * nu."""
    d2f = np.asarray(d2f, dtype=float)
    if not (np.isfinite(np.asarray(df)).all() and np.isfinite(d2f).all()):
        raise GeometryError("inputs must be finite")
    ginv, w = _metric_inverse(df)
    return np.einsum("...ij,...ij->...", ginv, d2f) / np.sqrt(w)


def graph_mcf_rhs_raw(values: np.ndarray, h: float, periodic: bool = False) -> np.ndarray:
    df = gradient_raw(values, h, periodic)
    d2f = hessian_raw(values, h, periodic)
    ginv, _ = _metric_inverse(df)
    return np.einsum("...ij,...ij->...", ginv, d2f)


def graph_mcf_rhs(patch: GraphPatch, periodic: bool = False) -> np.ndarray:
    """df/dt = (delta_ij - D_if D_jf/(1+|Df|^2)) D_iD_jf on all nodes."""
    return graph_mcf_rhs_raw(patch.values, patch.spacing, periodic)


# ---------------------------------------------------------------------------
# Curve quantities
# ---------------------------------------------------------------------------


def edge_lengths(curve: ClosedCurve) -> np.ndarray:
    """Edge lengths; m edges if closed (wrapping), m-1 if open.

    Cached on the curve; treat the returned array as read-only.
    """
    if "edges" not in curve._cache:
        v = curve.vertices
        if curve.closed:
            diffs = np.roll(v, -1, axis=0) - v
        else:
            diffs = v[1:] - v[:-1]
        curve._cache["edges"] = np.linalg.norm(diffs, axis=1)
    return curve._cache["edges"]


def total_length(curve: ClosedCurve) -> float:
    return float(edge_lengths(curve).sum())


def enclosed_area(curve: ClosedCurve) -> float:
    """Unsigned shoelace area (closed curves)."""
    if not curve.closed:
        raise GeometryError("area is defined for closed curves only")
    v = curve.vertices
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return abs(float(np.sum(x * yn - xn * y))) / 2.0


def _menger(prev_pts, pts, next_pts):
    a = pts - prev_pts
    b = next_pts - pts
    chord = next_pts - prev_pts
    la = np.linalg.norm(a, axis=-1)
    lb = np.linalg.norm(b, axis=-1)
    lc = np.linalg.norm(chord, axis=-1)
    if np.any(la == 0) or np.any(lb == 0):
        raise GeometryError("repeated vertex in curvature stencil")
    cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = np.where(lc > 0, 2.0 * cross / (la * lb * np.where(lc > 0, lc, 1.0)), 0.0)
    tangent = chord / np.where(lc > 0, lc, 1.0)[..., None]
    normal = np.stack([-tangent[..., 1], tangent[..., 0]], axis=-1)
    return tangent, normal, kappa


def curve_quantities_all(curve: ClosedCurve):
    """(unit tangents, left unit normals, signed Menger curvature) per vertex.

    kappa > 0 where the curve turns left; for a positively oriented convex
    curve the left normal points inward, so the curvature vector kappa*N is
    the inward curve-shortening velocity either way.  Open-curve endpoints get
    one-sided tangents and kappa = 0 (the flow holds them fixed).

    Cached on the curve; treat the returned arrays as read-only.
    """
    if "quantities" in curve._cache:
        return curve._cache["quantities"]
    v = curve.vertices
    if curve.closed:
        out = _menger(np.roll(v, 1, axis=0), v, np.roll(v, -1, axis=0))
    else:
        t, n, k = _menger(v[:-2], v[1:-1], v[2:])
        t0 = v[1] - v[0]
        t1 = v[-1] - v[-2]
        t0 = t0 / np.linalg.norm(t0)
        t1 = t1 / np.linalg.norm(t1)
        tan = np.vstack([t0, t, t1])
        nor = np.stack([-tan[:, 1], tan[:, 0]], axis=-1)
        kap = np.concatenate([[0.0], k, [0.0]])
        out = (tan, nor, kap)
    curve._cache["quantities"] = out
    return out


def curve_quantities(curve: ClosedCurve, vertex: int):
    """(tangent, normal, kappa) at one vertex; circumscribed-circle formula."""
    i = int(vertex)
    if not 0 <= i < curve.m:
        raise GeometryError(f"vertex {i} out of range")
    if not curve.closed and i in (0, curve.m - 1):
        raise GeometryError("curvature undefined at open-curve endpoints")
    tan, nor, kap = curve_quantities_all(curve)
    return tan[i].copy(), nor[i].copy(), float(kap[i])


def is_simple(curve: ClosedCurve) -> bool:
    """O(m^2) segment-pair intersection test; adjacent pairs excluded.

    Pairs are swept in row blocks to bound peak memory on large curves.
    Proper crossings only (strict interior on both segments); endpoint
    touches and collinear overlaps do not count.
    """
    v = curve.vertices
    m = curve.m
    if curve.closed:
        starts = v
        ends = np.roll(v, -1, axis=0)
        n_edges = m
    else:
        starts = v[:-1]
        ends = v[1:]
        n_edges = m - 1
    if n_edges < 3:
        return True
    d = ends - starts
    lox = np.minimum(starts[:, 0], ends[:, 0])
    hix = np.maximum(starts[:, 0], ends[:, 0])
    loy = np.minimum(starts[:, 1], ends[:, 1])
    hiy = np.maximum(starts[:, 1], ends[:, 1])
    jj = np.arange(n_edges)[None, :]
    block = max(1, 500_000 // n_edges)
    for i0 in range(0, n_edges - 2, block):
        ii = np.arange(i0, min(i0 + block, n_edges - 2))
        # inclusive bbox-overlap prefilter keeps every proper crossing
        cand = lox[ii, None] <= hix[jj]
        cand &= hix[ii, None] >= lox[jj]
        cand &= loy[ii, None] <= hiy[jj]
        cand &= hiy[ii, None] >= loy[jj]
        # skip adjacent edges (shared endpoint); wrap adjacency for closed
        cand &= jj >= ii[:, None] + 2
        if curve.closed:
            cand &= ~((ii[:, None] == 0) & (jj == n_edges - 1))
        bi, bj = np.nonzero(cand)
        if bi.size == 0:
            continue
        pi = ii[bi]
        r = d[pi]
        s = d[bj]
        qp = starts[bj] - starts[pi]
        denom = r[:, 0] * s[:, 1] - r[:, 1] * s[:, 0]
        t_num = qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]
        u_num = qp[:, 0] * r[:, 1] - qp[:, 1] * r[:, 0]
        safe = np.where(denom != 0, denom, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(denom != 0, t_num / safe, np.inf)
            u = np.where(denom != 0, u_num / safe, np.inf)
        if bool(np.any((t > 0) & (t < 1) & (u > 0) & (u < 1))):
            return False
    return True


def csf_velocity_raw(vertices: np.ndarray, closed: bool = True) -> np.ndarray:
    """Curve-shortening velocity kappa * N per vertex; open endpoints fixed."""
    v = vertices
    if closed:
        tan, nor, kap = _menger(np.roll(v, 1, axis=0), v, np.roll(v, -1, axis=0))
        return kap[:, None] * nor
    out = np.zeros_like(v)
    _, nor, kap = _menger(v[:-2], v[1:-1], v[2:])
    out[1:-1] = kap[:, None] * nor
    return out


def resample_curve_raw(
    vertices: np.ndarray, closed: bool, count: int
) -> np.ndarray:
    """Uniform-arclength linear resample; vertex 0 (and open endpoints) kept."""
    v = np.asarray(vertices, dtype=float)
    if closed:
        loop = np.vstack([v, v[:1]])
    else:
        loop = v
    seg = np.linalg.norm(loop[1:] - loop[:-1], axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total <= 0:
        raise GeometryError("cannot resample a zero-length curve")
    if closed:
        targets = total * np.arange(count) / count
    else:
        targets = np.linspace(0.0, total, count)
    x = np.interp(targets, s, loop[:, 0])
    y = np.interp(targets, s, loop[:, 1])
    return np.stack([x, y], axis=-1)


def _segment_pairs_intersect(
    starts_a: np.ndarray, d_a: np.ndarray, starts_b: np.ndarray, d_b: np.ndarray
) -> bool:
    for i in range(starts_a.shape[0]):
        r = d_a[i]
        qp = starts_b - starts_a[i]
        denom = r[0] * d_b[:, 1] - r[1] * d_b[:, 0]
        t_num = qp[:, 0] * d_b[:, 1] - qp[:, 1] * d_b[:, 0]
        u_num = qp[:, 0] * r[1] - qp[:, 1] * r[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            safe = np.where(denom != 0, denom, 1.0)
            t = np.where(denom != 0, t_num / safe, np.inf)
            u = np.where(denom != 0, u_num / safe, np.inf)
        if np.any((t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)):
            return True
    return False


def _curve_segments(curve: ClosedCurve) -> tuple[np.ndarray, np.ndarray]:
    v = curve.vertices
    if curve.closed:
        return v, np.roll(v, -1, axis=0) - v
    return v[:-1], v[1:] - v[:-1]


def curves_intersect(a: ClosedCurve, b: ClosedCurve) -> bool:
    """Whether any segment of a touches any segment of b (closed test)."""
    sa, da = _curve_segments(a)
    sb, db = _curve_segments(b)
    return _segment_pairs_intersect(sa, da, sb, db)


def curve_point_distance(curve: ClosedCurve, point) -> float:
    """Min distance from an ambient point to the polyline (segment-exact)."""
    p = np.asarray(point, dtype=float)
    starts, d = _curve_segments(curve)
    ll = np.sum(d * d, axis=1)
    t = np.clip(np.einsum("ij,ij->i", p - starts, d) / np.where(ll > 0, ll, 1.0), 0, 1)
    closest = starts + t[:, None] * d
    return float(np.min(np.linalg.norm(closest - p, axis=1)))


# ---------------------------------------------------------------------------
# Integration and sampling
# ---------------------------------------------------------------------------


def graph_lift_and_jacobian(patch: GraphPatch) -> tuple[np.ndarray, np.ndarray]:
    """(ambient points, sqrt(1+|Df|^2)) over active nodes, cached."""
    if "lift" not in patch._cache:
        act = patch.active
        pts = np.concatenate(
            [patch.nodes[act], patch.values[act][:, None]], axis=1
        )
        df = gradient_field(patch)[act]
        jac = np.sqrt(1.0 + np.sum(df * df, axis=-1))
        patch._cache["lift"] = (pts, jac)
    return patch._cache["lift"]


def integrate_over_graph(patch: GraphPatch, phi) -> float:
    """Sum of phi(t, lifted point) * sqrt(1+|Df|^2) * h^n over active nodes.

    phi(t, points) must accept a stacked array of ambient points (N, n+1).
    """
    pts, jac = graph_lift_and_jacobian(patch)
    vals = np.asarray(phi(patch.time, pts), dtype=float)
    return float(np.sum(vals * jac) * patch.spacing**patch.n)


def sample_surface(surface) -> SurfaceSample:
    """Lift a patch or curve to ambient points with normals, |A|, weights.

    Cached on the surface; treat the sample arrays as read-only.
    """
    if not isinstance(surface, (GraphPatch, ClosedCurve)):
        raise GeometryError(f"cannot sample {type(surface).__name__}")
    if "sample" in surface._cache:
        return surface._cache["sample"]
    if isinstance(surface, GraphPatch):
        act = surface.active
        pts, jac = graph_lift_and_jacobian(surface)
        df = gradient_field(surface)[act]
        d2f = hessian_field(surface)[act]
        sample = SurfaceSample(
            points=pts,
            normals=graph_normal(df),
            a_norm=second_fundamental_norm(df, d2f),
            weights=jac * surface.spacing**surface.n,
        )
    elif isinstance(surface, ClosedCurve):
        tan, nor, kap = curve_quantities_all(surface)
        el = edge_lengths(surface)
        m = surface.m
        if surface.closed:
            w = (el + np.roll(el, 1)) / 2.0
        else:
            w = np.empty(m)
            w[0] = el[0] / 2.0
            w[-1] = el[-1] / 2.0
            w[1:-1] = (el[:-1] + el[1:]) / 2.0
        sample = SurfaceSample(
            points=surface.vertices.copy(),
            normals=nor,
            a_norm=np.abs(kap),
            weights=w,
        )
    surface._cache["sample"] = sample
    return sample


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------


def to_json_dict(surface) -> dict:
    if isinstance(surface, GraphPatch):
        if not np.isfinite(surface.values).all():
            raise ValidationError("$.values", "NaN/Inf forbidden in serialized values")
        return {
            "kind": "graph_patch",
            "schema_version": SCHEMA_VERSION,
            "codim": surface.codim,
            "center": [float(c) for c in surface.center],
            "radius": float(surface.radius),
            "spacing": float(surface.spacing),
            "time": float(surface.time),
            "values": [float(v) for v in surface.values.ravel(order="C")],
        }
    if isinstance(surface, ClosedCurve):
        if not np.isfinite(surface.vertices).all():
            raise ValidationError("$.vertices", "NaN/Inf forbidden in serialized vertices")
        return {
            "kind": "closed_curve",
            "schema_version": SCHEMA_VERSION,
            "closed": bool(surface.closed),
            "time": float(surface.time),
            "vertices": [[float(x), float(y)] for x, y in surface.vertices],
        }
    raise ValidationError("$", f"cannot serialize {type(surface).__name__}")


def from_json_dict(doc: dict):
    if not isinstance(doc, dict):
        raise ValidationError("$", "surface document must be an object")
    kind = doc.get("kind")
    if kind == "graph_patch":
        for key in ("center", "radius", "spacing", "time", "values"):
            if key not in doc:
                raise ValidationError(f"$.{key}", "missing field")
        center = np.asarray(doc["center"], dtype=float)
        flat = np.asarray(doc["values"], dtype=float)
        if not np.isfinite(flat).all():
            raise ValidationError("$.values", "NaN/Inf forbidden")
        n = center.size
        m = round(flat.size ** (1.0 / n))
        if m**n != flat.size:
            raise ValidationError("$.values", f"length {flat.size} is not a grid^{n}")
        return GraphPatch(
            center=center,
            radius=float(doc["radius"]),
            spacing=float(doc["spacing"]),
            values=flat.reshape((m,) * n),
            codim=int(doc.get("codim", 1)),
            time=float(doc["time"]),
        )
    if kind == "closed_curve":
        for key in ("time", "vertices"):
            if key not in doc:
                raise ValidationError(f"$.{key}", "missing field")
        verts = np.asarray(doc["vertices"], dtype=float)
        if not np.isfinite(verts).all():
            raise ValidationError("$.vertices", "NaN/Inf forbidden")
        return ClosedCurve(
            vertices=verts,
            closed=bool(doc.get("closed", True)),
            time=float(doc["time"]),
        )
    raise ValidationError("$.kind", f"unknown kind {kind!r}")


def dumps_surface(surface) -> str:
    return canonical_dumps(to_json_dict(surface))


def loads_surface(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError("$", f"invalid JSON: {exc}")
    return from_json_dict(doc)
