"""Riemannian manifolds described by finite chart atlases.

Every function here accepts either a single point (``coords`` of shape
``(d,)``, integer ``chart_id``) or a batch (``coords`` of shape ``(n, d)``
and ``chart_id`` of shape ``(n,)``).  All arithmetic is elementwise over the
batch axis, so a point gives bit-identical results whether it is processed
alone or inside a batch.

Christoffel arrays use the layout ``gamma[..., k, i, j]`` for
:math:`\\Gamma^k_{ij}`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ChartEscape, InvalidChartPoint, NoTransition, OutOfDomain, SingularMetric

CoordFn = Callable[[np.ndarray], np.ndarray]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True, eq=False)
class ChartPoint:
    """A point (or batch of points) given in a chart."""

    chart_id: int | np.ndarray
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float))
        if np.ndim(self.chart_id) == 0:
            object.__setattr__(self, "chart_id", int(self.chart_id))
        else:
            object.__setattr__(self, "chart_id", np.asarray(self.chart_id, dtype=np.int64))

    @property
    def is_batch(self) -> bool:
        return self.coords.ndim == 2

    def __len__(self):
        return self.coords.shape[0] if self.is_batch else 1


@dataclass(frozen=True)
class ChartSpec:
    chart_id: int
    dimension: int
    metric_fn: CoordFn
    validity_fn: Optional[CoordFn] = None
    christoffel_fn: Optional[CoordFn] = None
    wrap_fn: Optional[CoordFn] = None
    # flat charts have identically vanishing Christoffel symbols
    flat: bool = False
    embed_fn: Optional[CoordFn] = None
    # rejection sampling: coordinate box and the part of it owned by this chart
    sampling_box: Optional[tuple] = None
    sampling_region: Optional[CoordFn] = None

    def is_valid(self, x: np.ndarray) -> np.ndarray:
        ok = np.all(np.isfinite(x), axis=-1)
        if self.validity_fn is not None:
            ok &= np.asarray(self.validity_fn(x), dtype=bool)
        return ok


@dataclass(frozen=True)
class TransitionSpec:
    from_chart: int
    to_chart: int
    map_fn: CoordFn
    jacobian_fn: CoordFn
    domain_fn: Optional[CoordFn] = None

    def in_domain(self, x: np.ndarray) -> np.ndarray:
        ok = np.all(np.isfinite(x), axis=-1)
        if self.domain_fn is not None:
            ok &= np.asarray(self.domain_fn(x), dtype=bool)
        return ok


@dataclass(frozen=True)
class GridPatch:
    """Tensor grid parametrizing (almost all of) a compact manifold.

    ``to_chart(q)`` returns ``(chart_ids, coords)`` and ``jacobian(q)`` the
    matrix ``d coords / d q``.  Non-periodic axes use cell midpoints.  The
    patch metric ``J^T g J`` must be diagonal.
    """

    bounds: tuple
    periodic: tuple
    to_chart: Callable
    jacobian: Callable

    def axes(self, n: int | Sequence[int]):
        ns = [n] * len(self.bounds) if np.ndim(n) == 0 else list(n)
        nodes, widths = [], []
        for (lo, hi), per, k in zip(self.bounds, self.periodic, ns):
            h = (hi - lo) / k
            offset = 0.0 if per else 0.5
            nodes.append(lo + (np.arange(k) + offset) * h)
            widths.append(h)
        return nodes, widths


@dataclass(frozen=True)
class AtlasManifold:
    name: str
    dimension: int
    charts: tuple
    transitions: tuple = ()
    switch_threshold: Optional[float] = None
    compact: bool = False
    patch: Optional[GridPatch] = None
    params: dict = field(default_factory=dict, hash=False, compare=False)

    def chart(self, chart_id: int) -> ChartSpec:
        for c in self.charts:
            if c.chart_id == chart_id:
                return c
        raise InvalidChartPoint(f"{self.name}: unknown chart {chart_id}")

    def transitions_from(self, chart_id: int) -> list:
        return [t for t in self.transitions if t.from_chart == chart_id]

    def find_transition(self, source: int, target: int) -> TransitionSpec:
        for t in self.transitions:
            if t.from_chart == source and t.to_chart == target:
                return t
        raise NoTransition(f"{self.name}: no transition {source} -> {target}")

    @property
    def all_flat(self) -> bool:
        return all(c.flat for c in self.charts)


# ---------------------------------------------------------------------------
# batch helpers

def as_batch(chart_id, coords):
    """Return ``(ids (n,), coords (n, d), was_single)``."""
    coords = np.asarray(coords, dtype=float)
    single = coords.ndim == 1
    x = coords[None, :] if single else coords
    ids = np.broadcast_to(np.asarray(chart_id, dtype=np.int64), x.shape[:1]).copy()
    return ids, x, single


def per_chart(m: AtlasManifold, ids: np.ndarray, fn: Callable, *arrays):
    """Evaluate ``fn(chart, *arrays_restricted)`` grouped by chart id."""
    first = int(np.ravel(ids)[0])
    if len(m.charts) == 1 or not np.any(ids != first):
        return fn(m.chart(first), *arrays)
    uniq = np.unique(ids)
    out = None
    for c in uniq:
        mask = ids == c
        r = np.asarray(fn(m.chart(int(c)), *[a[mask] for a in arrays]))
        if out is None:
            out = np.empty(ids.shape + r.shape[1:], dtype=r.dtype)
        out[mask] = r
    return out


def metric(m: AtlasManifold, ids, x) -> np.ndarray:
    return per_chart(m, ids, lambda c, xx: c.metric_fn(xx), x)


def fd_christoffel(metric_fn: CoordFn, x: np.ndarray) -> np.ndarray:
    """Christoffel symbols from central differences of the metric."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    h = 1e-5 * (1.0 + np.linalg.norm(x, axis=-1))
    dg = []
    for ell in range(d):
        e = np.zeros(d)
        e[ell] = 1.0
        step = h[..., None] * e
        dg.append((metric_fn(x + step) - metric_fn(x - step)) / (2.0 * h[..., None, None]))
    dg = np.stack(dg, axis=-3)  # dg[..., a, b, c] = d_a g_bc
    g = metric_fn(x)
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise SingularMetric(str(exc)) from None
    ginv = np.linalg.inv(g)
    t = (np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg)
    return 0.5 * np.einsum("...kl,...lij->...kij", ginv, t)


def christoffel(m: AtlasManifold, ids, x) -> np.ndarray:
    def one(c: ChartSpec, xx):
        if c.flat:
            d = c.dimension
            return np.zeros(xx.shape[:-1] + (d, d, d))
        if c.christoffel_fn is not None:
            return c.christoffel_fn(xx)
        return fd_christoffel(c.metric_fn, xx)

    return per_chart(m, ids, one, x)


def frame(g: np.ndarray) -> np.ndarray:
    """Lower-triangular ``L`` with ``L L^T = g^{-1}``."""
    try:
        return np.linalg.cholesky(np.linalg.inv(g))
    except np.linalg.LinAlgError as exc:
        raise SingularMetric(str(exc)) from None


def inner(g: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...ij,...j->...", a, g, b)


def _validate(m: AtlasManifold, ids, x):
    ok = per_chart(m, ids, lambda c, xx: c.is_valid(xx), x)
    if not np.all(ok):
        bad = np.flatnonzero(~np.asarray(ok))[:3]
        raise InvalidChartPoint(f"{m.name}: coordinates outside chart at indices {bad.tolist()}")


# ---------------------------------------------------------------------------
# public operations

def metric_at(m: AtlasManifold, p: ChartPoint) -> np.ndarray:
    ids, x, single = as_batch(p.chart_id, p.coords)
    _validate(m, ids, x)
    g = metric(m, ids, x)
    return g[0] if single else g


def christoffel_at(m: AtlasManifold, p: ChartPoint) -> np.ndarray:
    ids, x, single = as_batch(p.chart_id, p.coords)
    _validate(m, ids, x)
    gam = christoffel(m, ids, x)
    return gam[0] if single else gam


def orthonormal_frame_at(m: AtlasManifold, p: ChartPoint) -> np.ndarray:
    return frame(metric_at(m, p))


def transition_point(m: AtlasManifold, p: ChartPoint, target: int) -> ChartPoint:
    """Coordinates of the same point in chart ``target``.

    Asking for the point's own chart applies the chart's periodic wrap.
    """
    x = np.asarray(p.coords, dtype=float)
    source = int(np.asarray(p.chart_id).flat[0])
    if np.ndim(p.chart_id) and np.any(np.asarray(p.chart_id) != source):
        raise NoTransition("transition_point needs a batch in a single chart")
    if target == source:
        c = m.chart(source)
        return ChartPoint(p.chart_id, c.wrap_fn(x) if c.wrap_fn else x.copy())
    t = m.find_transition(source, target)
    if not np.all(t.in_domain(x)):
        raise OutOfDomain(f"{m.name}: point outside the overlap of charts {source} and {target}")
    return ChartPoint(np.full(x.shape[:-1], target) if x.ndim == 2 else target, t.map_fn(x))


def switch_charts(m: AtlasManifold, ids, x, vecs=()):
    """Wrap periodic charts and move points beyond the switch threshold.

    Tangent vectors in ``vecs`` are pushed by the transition Jacobian.
    Returns ``(ids, x, vecs, switched_mask, previous_ids)``.  Arrays are
    modified in place.
    """
    vecs = list(vecs)
    for c in m.charts:
        if c.wrap_fn is not None:
            mask = ids == c.chart_id
            if mask.all():
                x[...] = c.wrap_fn(x)
            elif mask.any():
                x[mask] = c.wrap_fn(x[mask])
    switched = np.zeros(ids.shape, dtype=bool)
    previous = ids.copy()
    if m.switch_threshold is None or not m.transitions:
        return ids, x, vecs, switched, previous
    far = np.linalg.norm(x, axis=-1) > m.switch_threshold
    if not far.any():
        return ids, x, vecs, switched, previous
    for c in np.unique(ids[far]):
        sel = np.flatnonzero(far & (ids == c))
        pending = sel
        for t in m.transitions_from(int(c)):
            if pending.size == 0:
                break
            xs = x[pending]
            ok = t.in_domain(xs)
            go = pending[ok]
            if go.size == 0:
                continue
            jac = t.jacobian_fn(x[go])
            for w in vecs:
                w[go] = np.einsum("...ij,...j->...i", jac, w[go])
            x[go] = t.map_fn(x[go])
            ids[go] = t.to_chart
            switched[go] = True
            pending = pending[~ok]
    return ids, x, vecs, switched, previous


def _check_escape(m: AtlasManifold, ids, x):
    ok = per_chart(m, ids, lambda c, xx: c.is_valid(xx), x)
    if not np.all(ok):
        raise ChartEscape(f"{m.name}: no chart covers the new point")


def rk4_transport(m: AtlasManifold, ids, x, v, ws=(), dt: float = 1e-3):
    """One RK4 step of the geodesic ODE, optionally transporting ``ws``.

    Solves x' = v, v'^k = -G^k_ij v^i v^j, w'^k = -G^k_ij v^i w^j in the
    current chart.  No chart switching happens here.
    """
    ws = list(ws)
    if m.all_flat or all(m.chart(int(c)).flat for c in np.unique(ids)):
        return x + dt * v, v.copy(), [w.copy() for w in ws]

    def rhs(xx, vv, wws):
        gam = christoffel(m, ids, xx)
        acc = -np.einsum("...kij,...i,...j->...k", gam, vv, vv)
        dws = [-np.einsum("...kij,...i,...j->...k", gam, vv, w) for w in wws]
        return vv, acc, dws

    k1x, k1v, k1w = rhs(x, v, ws)
    h = 0.5 * dt
    k2x, k2v, k2w = rhs(x + h * k1x, v + h * k1v, [w + h * k for w, k in zip(ws, k1w)])
    k3x, k3v, k3w = rhs(x + h * k2x, v + h * k2v, [w + h * k for w, k in zip(ws, k2w)])
    k4x, k4v, k4w = rhs(x + dt * k3x, v + dt * k3v, [w + dt * k for w, k in zip(ws, k3w)])
    s = dt / 6.0
    xn = x + s * (k1x + 2 * k2x + 2 * k3x + k4x)
    vn = v + s * (k1v + 2 * k2v + 2 * k3v + k4v)
    wn = [w + s * (a + 2 * b + 2 * c + e) for w, a, b, c, e in zip(ws, k1w, k2w, k3w, k4w)]
    return xn, vn, wn


def geodesic_flow(m: AtlasManifold, ids, x, v, dt, ws=()):
    """Batched geodesic step with chart switching.

    Returns ``(ids, x, v, ws, switched, previous_ids)``.
    """
    x, v, ws = rk4_transport(m, ids, x, v, ws, dt)
    ids = ids.copy()
    ids, x, vecs, switched, prev = switch_charts(m, ids, x, [v, *ws])
    _check_escape(m, ids, x)
    return ids, x, vecs[0], vecs[1:], switched, prev


def geodesic_step(m: AtlasManifold, p: ChartPoint, v, dt: float):
    """Advance ``(p, v)`` along the geodesic by ``dt`` (one RK4 step)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    ids, x, single = as_batch(p.chart_id, p.coords)
    _validate(m, ids, x)
    vv = np.atleast_2d(np.asarray(v, dtype=float)).copy()
    ids, x, vv, _, _, _ = geodesic_flow(m, ids, x.copy(), vv, dt)
    if single:
        return ChartPoint(int(ids[0]), x[0]), vv[0]
    return ChartPoint(ids, x), vv


def transport_step(m: AtlasManifold, p: ChartPoint, v, w, dt: float):
    """Geodesic step that also parallel-transports ``w``.

    Returns ``(new_point, new_velocity, transported_w)``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    ids, x, single = as_batch(p.chart_id, p.coords)
    _validate(m, ids, x)
    vv = np.atleast_2d(np.asarray(v, dtype=float)).copy()
    ww = np.atleast_2d(np.asarray(w, dtype=float)).copy()
    ids, x, vv, (ww,), _, _ = geodesic_flow(m, ids, x.copy(), vv, dt, [ww])
    if single:
        return ChartPoint(int(ids[0]), x[0]), vv[0], ww[0]
    return ChartPoint(ids, x), vv, ww


def parallel_transport(m: AtlasManifold, p: ChartPoint, v, along_velocity, dt: float):
    """Transport ``v`` for time ``dt`` along the geodesic with initial velocity ``along_velocity``."""
    return transport_step(m, p, along_velocity, v, dt)[2]


def integrate_geodesic(m: AtlasManifold, p: ChartPoint, v, t_final: float, dt: float, w=None):
    """Geodesic (and optional transport of ``w``) up to ``t_final``.

    Takes ``floor(t_final / dt)`` full steps followed by one shorter step so
    that the final time is hit exactly.
    """
    n_full = int(np.floor(t_final / dt + 1e-12))
    rest = t_final - n_full * dt
    steps = [dt] * n_full + ([rest] if rest > 1e-14 else [])
    ids, x, single = as_batch(p.chart_id, p.coords)
    x = x.copy()
    vv = np.atleast_2d(np.asarray(v, dtype=float)).copy()
    ws = [] if w is None else [np.atleast_2d(np.asarray(w, dtype=float)).copy()]
    for h in steps:
        ids, x, vv, ws, _, _ = geodesic_flow(m, ids, x, vv, h, ws)
    out_p = ChartPoint(int(ids[0]), x[0]) if single else ChartPoint(ids, x)
    out_v = vv[0] if single else vv
    if w is None:
        return out_p, out_v
    return out_p, out_v, (ws[0][0] if single else ws[0])


def embed(m: AtlasManifold, p: ChartPoint) -> np.ndarray:
    """Embedded coordinates of ``p`` (built-ins only)."""
    ids, x, single = as_batch(p.chart_id, p.coords)
    e = per_chart(m, ids, lambda c, xx: c.embed_fn(xx), x)
    return e[0] if single else e


# ---------------------------------------------------------------------------
# built-in manifolds

def _identity_metric(d):
    eye = np.eye(d)

    def g(x):
        return np.broadcast_to(eye, np.shape(x)[:-1] + (d, d)).copy()

    return g


def euclidean(d: int = 2, box: float = 10.0) -> AtlasManifold:
    """Flat space R^d in one global chart.

    ``d = 1`` is allowed as an analytic test baseline.
    """
    chart = ChartSpec(
        chart_id=0,
        dimension=d,
        metric_fn=_identity_metric(d),
        flat=True,
        embed_fn=lambda x: np.array(x, dtype=float),
        sampling_box=tuple((-box, box) for _ in range(d)),
    )
    return AtlasManifold(name=f"euclidean{d}", dimension=d, charts=(chart,))


def flat_torus2() -> AtlasManifold:
    """Flat torus R^2 / (2 pi Z)^2 in one wrapping chart."""

    def wrap(x):
        return np.mod(x, TWO_PI)

    def emb(x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.cos(x[..., 0]), np.sin(x[..., 0]), np.cos(x[..., 1]), np.sin(x[..., 1])], axis=-1)

    chart = ChartSpec(
        chart_id=0,
        dimension=2,
        metric_fn=_identity_metric(2),
        flat=True,
        wrap_fn=wrap,
        embed_fn=emb,
        sampling_box=((0.0, TWO_PI), (0.0, TWO_PI)),
    )
    patch = GridPatch(
        bounds=((0.0, TWO_PI), (0.0, TWO_PI)),
        periodic=(True, True),
        to_chart=lambda q: (np.zeros(q.shape[:-1], dtype=np.int64), np.array(q, dtype=float)),
        jacobian=lambda q: np.broadcast_to(np.eye(2), q.shape[:-1] + (2, 2)).copy(),
    )
    return AtlasManifold(name="flat_torus2", dimension=2, charts=(chart,), compact=True, patch=patch)


def _stereo_metric(u):
    u = np.asarray(u, dtype=float)
    f = 4.0 / (1.0 + np.sum(u * u, axis=-1)) ** 2
    return f[..., None, None] * np.eye(2)


def stereo_christoffel(u):
    """Analytic Christoffel symbols of the unit sphere in a stereographic chart."""
    u = np.asarray(u, dtype=float)
    r2 = np.sum(u * u, axis=-1)
    eye = np.eye(2)
    # G^k_ij = -2 (d_ki u_j + d_kj u_i - d_ij u_k) / (1 + |u|^2)
    t = (np.einsum("ki,...j->...kij", eye, u)
         + np.einsum("kj,...i->...kij", eye, u)
         - np.einsum("ij,...k->...kij", eye, u))
    return -2.0 * t / (1.0 + r2)[..., None, None, None]


def _inversion(u):
    u = np.asarray(u, dtype=float)
    return u / np.sum(u * u, axis=-1)[..., None]


def _inversion_jacobian(u):
    u = np.asarray(u, dtype=float)
    r2 = np.sum(u * u, axis=-1)[..., None, None]
    return (r2 * np.eye(2) - 2.0 * np.einsum("...i,...j->...ij", u, u)) / r2 ** 2


def _stereo_embed(sign):
    def emb(u):
        u = np.asarray(u, dtype=float)
        r2 = np.sum(u * u, axis=-1)
        z = sign * (1.0 - r2) / (1.0 + r2)
        return np.concatenate([2.0 * u / (1.0 + r2)[..., None], z[..., None]], axis=-1)

    return emb


def sphere_chart_from_embedding(p3: np.ndarray) -> ChartPoint:
    """Chart point of embedded unit vectors; northern hemisphere -> chart 0."""
    p3 = np.asarray(p3, dtype=float)
    north = p3[..., 2] >= 0
    denom = np.where(north, 1.0 + p3[..., 2], 1.0 - p3[..., 2])
    u = p3[..., :2] / denom[..., None]
    return ChartPoint(np.where(north, 0, 1), u)


def sphere2_stereographic(switch_threshold: float = 1.5, safe_radius: float = 10.0) -> AtlasManifold:
    """Unit sphere with two stereographic charts.

    Chart 0 projects from the south pole (origin = north pole), chart 1 from
    the north pole.  Both have metric ``4 I / (1 + |u|^2)^2`` and the overlap
    map is the inversion ``u -> u / |u|^2``.
    """
    if switch_threshold <= 1.0:
        raise ValueError("switch_threshold must exceed 1 to avoid chart ping-pong")

    def valid(u):
        return np.linalg.norm(u, axis=-1) < safe_radius

    def region_closed(u):
        return np.sum(u * u, axis=-1) <= 1.0

    def region_open(u):
        return np.sum(u * u, axis=-1) < 1.0

    box = ((-1.0, 1.0), (-1.0, 1.0))
    charts = tuple(
        ChartSpec(
            chart_id=i,
            dimension=2,
            metric_fn=_stereo_metric,
            validity_fn=valid,
            christoffel_fn=stereo_christoffel,
            embed_fn=_stereo_embed(1.0 if i == 0 else -1.0),
            sampling_box=box,
            sampling_region=region_closed if i == 0 else region_open,
        )
        for i in (0, 1)
    )

    def overlap(u):
        return np.sum(u * u, axis=-1) > 1e-24

    transitions = (
        TransitionSpec(0, 1, _inversion, _inversion_jacobian, overlap),
        TransitionSpec(1, 0, _inversion, _inversion_jacobian, overlap),
    )

    # Mercator-type patch (s, theta): s <= 0 in chart 0 as u = e^s (cos, sin),
    # s > 0 in chart 1 as u' = e^{-s} (cos, sin); patch metric sech(s)^2 I.
    def to_chart(q):
        s, th = q[..., 0], q[..., 1]
        south = s > 0
        r = np.exp(np.where(south, -s, s))
        u = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
        return np.where(south, 1, 0).astype(np.int64), u

    def jac(q):
        s, th = q[..., 0], q[..., 1]
        south = s > 0
        r = np.exp(np.where(south, -s, s))
        sg = np.where(south, -1.0, 1.0)
        c, sn = np.cos(th), np.sin(th)
        j = np.empty(q.shape[:-1] + (2, 2))
        j[..., 0, 0] = sg * r * c
        j[..., 1, 0] = sg * r * sn
        j[..., 0, 1] = -r * sn
        j[..., 1, 1] = r * c
        return j

    patch = GridPatch(bounds=((-12.0, 12.0), (0.0, TWO_PI)), periodic=(False, True), to_chart=to_chart, jacobian=jac)
    return AtlasManifold(
        name="sphere2",
        dimension=2,
        charts=charts,
        transitions=transitions,
        switch_threshold=switch_threshold,
        compact=True,
        patch=patch,
        params={"switch_threshold": switch_threshold},
    )


# height functions for graph surfaces: name -> factory(**params) -> (h, grad, hess)
def _paraboloid(a: float = 0.5):
    def h(x):
        return 0.5 * a * np.sum(x * x, axis=-1)

    def grad(x):
        return a * np.asarray(x, dtype=float)

    def hess(x):
        return np.broadcast_to(a * np.eye(2), np.shape(x)[:-1] + (2, 2)).copy()

    return h, grad, hess


def _sine_sheet(a: float = 0.3, k: float = 1.0):
    def h(x):
        return a * np.sin(k * x[..., 0]) * np.sin(k * x[..., 1])

    def grad(x):
        s0, c0 = np.sin(k * x[..., 0]), np.cos(k * x[..., 0])
        s1, c1 = np.sin(k * x[..., 1]), np.cos(k * x[..., 1])
        return a * k * np.stack([c0 * s1, s0 * c1], axis=-1)

    def hess(x):
        s0, c0 = np.sin(k * x[..., 0]), np.cos(k * x[..., 0])
        s1, c1 = np.sin(k * x[..., 1]), np.cos(k * x[..., 1])
        out = np.empty(np.shape(x)[:-1] + (2, 2))
        out[..., 0, 0] = -s0 * s1
        out[..., 1, 1] = -s0 * s1
        out[..., 0, 1] = c0 * c1
        out[..., 1, 0] = c0 * c1
        return a * k * k * out

    return h, grad, hess


HEIGHT_FUNCTIONS = {"paraboloid": _paraboloid, "sine_sheet": _sine_sheet}


def graph_surface(height: str = "paraboloid", box: float = 10.0, **params) -> AtlasManifold:
    """Surface z = h(x, y) with the induced metric ``I + grad h grad h^T``."""
    try:
        h, grad, hess = HEIGHT_FUNCTIONS[height](**params)
    except KeyError:
        raise ValueError(f"unknown height function {height!r}") from None

    def g(x):
        dh = grad(np.asarray(x, dtype=float))
        return np.eye(2) + np.einsum("...i,...j->...ij", dh, dh)

    def gamma(x):
        x = np.asarray(x, dtype=float)
        dh = grad(x)
        # G^k_ij = h_k h_ij / (1 + |grad h|^2)
        return np.einsum("...k,...ij->...kij", dh, hess(x)) / (1.0 + np.sum(dh * dh, axis=-1))[..., None, None, None]

    def emb(x):
        x = np.asarray(x, dtype=float)
        return np.concatenate([x, h(x)[..., None]], axis=-1)

    chart = ChartSpec(
        chart_id=0,
        dimension=2,
        metric_fn=g,
        validity_fn=lambda x: np.linalg.norm(x, axis=-1) < 1e6,
        christoffel_fn=gamma,
        embed_fn=emb,
        sampling_box=((-box, box), (-box, box)),
    )
    return AtlasManifold(name=f"graph_surface:{height}", dimension=2, charts=(chart,),
                         params={"height": height, **params})


def manifold_by_name(name: str, **params) -> AtlasManifold:
    """Registry lookup used by configuration files."""
    if name == "euclidean":
        return euclidean(**params)
    if name in ("sphere2", "sphere2_stereographic"):
        return sphere2_stereographic(**params)
    if name in ("flat_torus2", "torus"):
        return flat_torus2()
    if name == "graph_surface":
        return graph_surface(**params)
    raise ValueError(f"unknown manifold {name!r}")


MANIFOLD_NAMES = ("euclidean", "sphere2", "sphere2_stereographic", "flat_torus2", "torus", "graph_surface")
