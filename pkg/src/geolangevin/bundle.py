"""Tangent-bundle calculus in induced chart coordinates.

A double-tangent vector ``a`` at a state ``(x, v)`` is stored as its two
coordinate blocks: ``base`` (components along d/dx^j) and ``fibre``
(components along d/dv^j).  The vertical/horizontal split is recomputed from
the Levi-Civita nonlinear connection ``N^i_j = G^i_jk v^k`` whenever needed.

Lie brackets use the convention ``[X, Y] f = X(Y f) - Y(X f)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NotUnitState
from .geometry import AtlasManifold, ChartPoint, as_batch, christoffel, frame, inner, metric

FIRST_ORDER_STEP = 1e-5
BRACKET_STEP = 1e-4
SPHERE_STEP = 1e-3
UNIT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class TangentState:
    """Point of TM (or UTM): chart, base coordinates, velocity components."""

    chart_id: int | np.ndarray
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if np.ndim(self.chart_id) == 0:
            object.__setattr__(self, "chart_id", int(self.chart_id))
        else:
            object.__setattr__(self, "chart_id", np.asarray(self.chart_id, dtype=np.int64))

    @property
    def point(self) -> ChartPoint:
        return ChartPoint(self.chart_id, self.x)

    @property
    def is_batch(self) -> bool:
        return self.x.ndim == 2

    def __len__(self):
        return self.x.shape[0] if self.is_batch else 1

    def batch(self):
        """``(ids, x, v)`` as 2-d arrays."""
        ids, x, _ = as_batch(self.chart_id, self.x)
        v = np.atleast_2d(self.v)
        return ids, x, v

    def __getitem__(self, idx) -> "TangentState":
        ids, x, v = self.batch()
        return TangentState(ids[idx], x[idx], v[idx])

    def moved(self, dx=0.0, dv=0.0) -> "TangentState":
        return TangentState(self.chart_id, self.x + dx, self.v + dv)


@dataclass(frozen=True, eq=False)
class DoubleTangentComponents:
    base: np.ndarray
    fibre: np.ndarray

    def __add__(self, other):
        return DoubleTangentComponents(self.base + other.base, self.fibre + other.fibre)

    def __sub__(self, other):
        return DoubleTangentComponents(self.base - other.base, self.fibre - other.fibre)

    def __mul__(self, c):
        c = np.asarray(c)[..., None] if np.ndim(c) else c
        return DoubleTangentComponents(self.base * c, self.fibre * c)

    __rmul__ = __mul__

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.base, self.fibre], axis=-1)


@dataclass(frozen=True, eq=False)
class NonlinearConnection:
    N: np.ndarray
    G: np.ndarray


Field = Callable[[TangentState], DoubleTangentComponents]
StateFunction = Callable[[TangentState], np.ndarray]


def _ids(s: TangentState):
    return np.broadcast_to(np.asarray(s.chart_id), s.x.shape[:-1])


def _gamma(m, s: TangentState):
    return christoffel(m, _ids(s), s.x)


def _g(m, s: TangentState):
    return metric(m, _ids(s), s.x)


def metric_norm(m: AtlasManifold, s: TangentState) -> np.ndarray:
    return np.sqrt(inner(_g(m, s), s.v, s.v))


def nonlinear_connection(m: AtlasManifold, s: TangentState) -> NonlinearConnection:
    gam = _gamma(m, s)
    n = np.einsum("...ijk,...k->...ij", gam, s.v)
    gg = 0.5 * np.einsum("...jik,...i,...k->...j", gam, s.v, s.v)
    return NonlinearConnection(n, gg)


def spray_at(m: AtlasManifold, s: TangentState) -> DoubleTangentComponents:
    """Geodesic spray: base ``v``, fibre ``-G^k_ij v^i v^j``."""
    gam = _gamma(m, s)
    return DoubleTangentComponents(s.v.copy(), -np.einsum("...kij,...i,...j->...k", gam, s.v, s.v))


def vertical_lift(m: AtlasManifold, s: TangentState, w) -> DoubleTangentComponents:
    w = np.broadcast_to(np.asarray(w, dtype=float), s.v.shape)
    return DoubleTangentComponents(np.zeros(s.v.shape), w.copy())


def canonical_field(m: AtlasManifold, s: TangentState) -> DoubleTangentComponents:
    return vertical_lift(m, s, s.v)


def horizontal_lift(m: AtlasManifold, s: TangentState, w) -> DoubleTangentComponents:
    w = np.broadcast_to(np.asarray(w, dtype=float), s.v.shape).copy()
    gam = _gamma(m, s)
    return DoubleTangentComponents(w, -np.einsum("...lij,...i,...j->...l", gam, w, s.v))


def connector_apply(m: AtlasManifold, s: TangentState, a: DoubleTangentComponents) -> np.ndarray:
    """Vertical part of ``a`` read as a tangent vector at the base point."""
    gam = _gamma(m, s)
    return a.fibre + np.einsum("...lij,...j,...i->...l", gam, s.v, a.base)


def projection_apply(m: AtlasManifold, s: TangentState, a: DoubleTangentComponents) -> np.ndarray:
    return np.array(a.base, copy=True)


def sasaki_inner(m: AtlasManifold, s: TangentState, a: DoubleTangentComponents, b: DoubleTangentComponents):
    g = _g(m, s)
    return inner(g, connector_apply(m, s, a), connector_apply(m, s, b)) + inner(g, a.base, b.base)


def _require_unit(m, s):
    if np.any(np.abs(metric_norm(m, s) - 1.0) > UNIT_TOL):
        raise NotUnitState("state velocity is not of unit metric length")


def tangential_projection(g: np.ndarray, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    return w - inner(g, w, u)[..., None] * u


def tangential_lift(m: AtlasManifold, s: TangentState, w) -> DoubleTangentComponents:
    """Vertical lift of the part of ``w`` g-orthogonal to the unit velocity."""
    _require_unit(m, s)
    w = np.broadcast_to(np.asarray(w, dtype=float), s.v.shape)
    return vertical_lift(m, s, tangential_projection(_g(m, s), s.v, w))


def apply_field_to_function(m: AtlasManifold, field: Field, f: StateFunction, s: TangentState,
                            h: float = FIRST_ORDER_STEP) -> np.ndarray:
    """Derivative of ``f`` along ``field`` at ``s`` (central differences).

    Base and fibre directions are differenced separately and added.
    """
    a = field(s)
    d_base = (f(s.moved(dx=h * a.base)) - f(s.moved(dx=-h * a.base))) / (2 * h)
    d_fibre = (f(s.moved(dv=h * a.fibre)) - f(s.moved(dv=-h * a.fibre))) / (2 * h)
    return d_base + d_fibre


def _derivative_of_field(Y: Field, s: TangentState, a: DoubleTangentComponents, h: float):
    plus = Y(s.moved(dx=h * a.base, dv=h * a.fibre))
    minus = Y(s.moved(dx=-h * a.base, dv=-h * a.fibre))
    return (plus - minus) * (1.0 / (2 * h))


def lie_bracket_fd(m: AtlasManifold, X: Field, Y: Field, s: TangentState, h: float = BRACKET_STEP):
    """``[X, Y] = D_X Y - D_Y X`` in induced coordinates, two-sided differences."""
    return _derivative_of_field(Y, s, X(s), h) - _derivative_of_field(X, s, Y(s), h)


def sasaki_divergence_fd(m: AtlasManifold, field: Field, s: TangentState, h: float = FIRST_ORDER_STEP):
    """Divergence w.r.t. the Sasaki volume ``det g dx dv`` in induced coordinates."""
    ids, x, v = s.batch()
    d = x.shape[-1]
    detg = np.linalg.det(metric(m, ids, x))
    total = np.zeros(x.shape[0])
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        sp = TangentState(ids, x + e, v)
        sm = TangentState(ids, x - e, v)
        fp = np.linalg.det(metric(m, ids, x + e)) * field(sp).base[..., i]
        fm = np.linalg.det(metric(m, ids, x - e)) * field(sm).base[..., i]
        total += (fp - fm) / (2 * h)
        sp = TangentState(ids, x, v + e)
        sm = TangentState(ids, x, v - e)
        total += detg * (field(sp).fibre[..., i] - field(sm).fibre[..., i]) / (2 * h)
    out = total / detg
    return out if s.is_batch else out[0]


def spherical_gradient_fd(m: AtlasManifold, s: TangentState, f: StateFunction, h: float = FIRST_ORDER_STEP):
    """Gradient of ``f`` along the unit fibre sphere, as a tangent vector at x."""
    _require_unit(m, s)
    d = s.v.shape[-1]
    dv = np.empty(s.v.shape)
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        dv[..., i] = (f(s.moved(dv=e)) - f(s.moved(dv=-e))) / (2 * h)
    g = _g(m, s)
    w = np.linalg.solve(g, dv[..., None])[..., 0]
    return tangential_projection(g, s.v, w)


def _householder_complement(u: np.ndarray) -> np.ndarray:
    """Columns 1..d-1 of a reflector mapping e_0 to +-u: an orthonormal basis of u-perp."""
    d = u.shape[-1]
    sgn = np.where(u[..., 0] >= 0, 1.0, -1.0)
    n = u.copy()
    n[..., 0] += sgn
    nn = np.sum(n * n, axis=-1)
    hmat = np.eye(d) - 2.0 * np.einsum("...i,...j->...ij", n, n) / nn[..., None, None]
    return hmat[..., :, 1:]


def spherical_laplacian_fd(m: AtlasManifold, s: TangentState, f: StateFunction, h: float = SPHERE_STEP):
    """Laplace-Beltrami of ``f`` on the unit fibre sphere of (T_x M, g).

    Second differences along great circles through ``u`` in d-1
    g-orthonormal directions.
    """
    _require_unit(m, s)
    g = _g(m, s)
    L = frame(g)
    # v = L u_hat with |u_hat| = 1 in the Euclidean sense
    u_hat = np.linalg.solve(L, s.v[..., None])[..., 0]
    basis = _householder_complement(u_hat)
    f0 = f(s)
    total = np.zeros(np.shape(f0))
    c, sn = np.cos(h), np.sin(h)
    for a in range(basis.shape[-1]):
        e = basis[..., a]
        for sign in (1.0, -1.0):
            w_hat = c * u_hat + sign * sn * e
            w = np.einsum("...ij,...j->...i", L, w_hat)
            total = total + f(TangentState(s.chart_id, s.x, w))
        total = total - 2.0 * f0
    return total / h ** 2


def unit_fibre_normalize(m: AtlasManifold, s: TangentState) -> TangentState:
    n = metric_norm(m, s)
    return TangentState(s.chart_id, s.x, s.v / np.asarray(n)[..., None])
