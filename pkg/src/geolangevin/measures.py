"""The bundle measure ``e^{-Phi} vol_g`` on the base times a fibre law.

Two fibre laws are supported, both defined in the g-orthonormal frame of the
fibre so that they are rotation invariant:

* ``gaussian``: standard normal scaled by ``beta^{-1/2}``; in coordinates
  this has covariance ``g(x)^{-1} / beta``.
* ``uniform_sphere``: normalized surface measure of the g-unit sphere.

Base integrals use the manifold's :class:`GridPatch` (compact built-ins) or a
coordinate box (non-compact ones), always with the Riemannian volume weight
``sqrt(det g)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma as _gamma_fn
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss

from .bundle import TangentState
from .errors import EnvelopeViolation, NonCompactBase
from .geometry import AtlasManifold, ChartPoint, GridPatch, as_batch, frame, metric
from .potentials import PotentialSpec, value

GAUSSIAN = "gaussian"
UNIFORM_SPHERE = "uniform_sphere"
FIBRE_RULES = ("gauss_hermite", "sphere_grid", "circle_grid")


@dataclass(frozen=True, eq=False)
class BundleMeasureSpec:
    """Invariant measure of one of the two models.

    ``base_potential`` is the full base weight exponent (``beta * Psi`` for
    Langevin, ``Psi`` for fibre lay-down).  ``base_box`` bounds base
    quadrature on non-compact manifolds; ``envelope`` overrides the
    rejection-sampling bound on ``e^{-Phi} sqrt(det g)``.
    """

    base_potential: PotentialSpec
    fibre: str = GAUSSIAN
    beta: float = 1.0
    base_box: Optional[tuple] = None
    envelope: Optional[float] = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.fibre not in (GAUSSIAN, UNIFORM_SPHERE):
            raise ValueError(f"unknown fibre law {self.fibre!r}")
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    @classmethod
    def for_model(cls, model, **kw) -> "BundleMeasureSpec":
        from .dynamics import LangevinParams

        if isinstance(model, LangevinParams):
            return cls(model.potential.scaled(model.beta), GAUSSIAN, model.beta, **kw)
        return cls(model.potential, UNIFORM_SPHERE, 1.0, **kw)

    def normalization(self, m: AtlasManifold, n: int = 64):
        """Base partition function ``Z = int e^{-Phi} dvol`` and an error estimate."""
        key = (m.name, repr(sorted(m.params.items())), n)
        if key not in self._cache:
            ids, x, w = base_grid(m, self, n)
            z = float(np.sum(w * np.exp(-value(self.base_potential, ids, x))))
            ids2, x2, w2 = base_grid(m, self, max(n // 2, 4))
            z2 = float(np.sum(w2 * np.exp(-value(self.base_potential, ids2, x2))))
            self._cache[key] = (z, abs(z - z2))
        return self._cache[key]


@dataclass(frozen=True)
class QuadratureSpec:
    """Base rule (``grid`` or ``mc``) and fibre rule.

    ``fibre_rule=None`` picks Gauss-Hermite for Gaussian fibres and a sphere
    grid (a circle of ``n_theta`` points when d = 2) for unit fibres.
    """

    base_rule: str = "grid"
    base_n: int = 64
    mc_n: int = 20000
    mc_seed: int = 0
    fibre_rule: Optional[str] = None
    order: int = 20
    n_theta: int = 64
    n_phi: int = 32
    n_circle: int = 256

    def __post_init__(self):
        if self.base_rule not in ("grid", "mc"):
            raise ValueError(f"unknown base rule {self.base_rule!r}")
        if self.fibre_rule is not None and self.fibre_rule not in FIBRE_RULES:
            raise ValueError(f"unknown fibre rule {self.fibre_rule!r}")
        if min(self.base_n, self.order, self.n_theta, self.n_phi, self.n_circle) < 4:
            raise ValueError("quadrature orders must be >= 4")


DEFAULT_QUAD = QuadratureSpec()


# ---------------------------------------------------------------------------
# fibre quadrature


def sphere_surface_area(d: int) -> float:
    """Area of the unit sphere S^{d-1} in R^d."""
    return 2.0 * np.pi ** (d / 2) / _gamma_fn(d / 2)


def frame_nodes(spec: BundleMeasureSpec, d: int, quad: QuadratureSpec = DEFAULT_QUAD):
    """Fibre nodes in the orthonormal frame, shape ``(K, d)``, and weights ``(K,)``."""
    rule = quad.fibre_rule or ("gauss_hermite" if spec.fibre == GAUSSIAN else "sphere_grid")
    if rule == "gauss_hermite":
        z, w = hermegauss(quad.order)
        w = w / np.sqrt(2.0 * np.pi)
        grids = np.meshgrid(*([z] * d), indexing="ij")
        wts = np.meshgrid(*([w] * d), indexing="ij")
        nodes = np.stack([a.ravel() for a in grids], axis=-1) / np.sqrt(spec.beta)
        return nodes, np.prod(np.stack([a.ravel() for a in wts]), axis=0)
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([0.5, 0.5])
    if rule == "circle_grid" or (rule == "sphere_grid" and d == 2):
        if d != 2:
            raise ValueError("circle grid needs d = 2")
        k = quad.n_circle if rule == "circle_grid" else quad.n_theta
        th = 2.0 * np.pi * np.arange(k) / k
        return np.stack([np.cos(th), np.sin(th)], axis=-1), np.full(k, 1.0 / k)
    if d != 3:
        raise ValueError("sphere grid implemented for d <= 3")
    # Gauss-Legendre in cos(theta) times trapezoid in phi
    ct, wt = leggauss(quad.n_theta)
    phi = 2.0 * np.pi * np.arange(quad.n_phi) / quad.n_phi
    c, p = np.meshgrid(ct, phi, indexing="ij")
    s = np.sqrt(1.0 - c * c)
    nodes = np.stack([s * np.cos(p), s * np.sin(p), c], axis=-1).reshape(-1, 3)
    w = np.repeat(wt / (2.0 * quad.n_phi), quad.n_phi)
    return nodes, w


def fibre_nodes(m: AtlasManifold, spec: BundleMeasureSpec, ids, x, quad: QuadratureSpec = DEFAULT_QUAD):
    """Coordinate fibre nodes ``(N, K, d)`` over base points and weights ``(K,)``."""
    z, w = frame_nodes(spec, x.shape[-1], quad)
    L = frame(metric(m, ids, x))
    return np.einsum("nij,kj->nki", L, z), w


def _fibre_mean(m, spec, f, ids, x, quad):
    v, w = fibre_nodes(m, spec, ids, x, quad)
    n, k, d = v.shape
    s = TangentState(np.repeat(ids, k), np.repeat(x, k, axis=0), v.reshape(n * k, d))
    vals = np.asarray(f(s), dtype=float).reshape(n, k)
    return vals @ w


def fibrewise_average(m: AtlasManifold, spec: BundleMeasureSpec, f: Callable[[TangentState], np.ndarray],
                      p: ChartPoint, quad: QuadratureSpec = DEFAULT_QUAD):
    """Fibre mean of ``f`` over the base point(s) ``p``."""
    ids, x, single = as_batch(p.chart_id, p.coords)
    out = _fibre_mean(m, spec, f, ids, x, quad)
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# base quadrature


def _box_patch(m: AtlasManifold, box) -> GridPatch:
    d = m.dimension
    cid = m.charts[0].chart_id
    return GridPatch(
        bounds=tuple(box),
        periodic=(False,) * d,
        to_chart=lambda q: (np.full(q.shape[:-1], cid, dtype=np.int64), np.array(q, dtype=float)),
        jacobian=lambda q: np.broadcast_to(np.eye(d), q.shape[:-1] + (d, d)).copy(),
    )


def base_patch(m: AtlasManifold, spec: Optional[BundleMeasureSpec] = None) -> GridPatch:
    if spec is not None and spec.base_box is not None:
        return _box_patch(m, spec.base_box)
    if m.patch is not None:
        return m.patch
    if len(m.charts) == 1 and m.charts[0].sampling_box is not None:
        return _box_patch(m, m.charts[0].sampling_box)
    raise NonCompactBase(f"{m.name}: no quadrature patch; supply base_box")


def patch_nodes(patch: GridPatch, n):
    nodes, widths = patch.axes(n)
    q = np.stack([a.ravel() for a in np.meshgrid(*nodes, indexing="ij")], axis=-1)
    return q, float(np.prod(widths))


def base_grid(m: AtlasManifold, spec: Optional[BundleMeasureSpec] = None, n=64):
    """Chart ids, coordinates and Riemannian volume weights of the base grid."""
    patch = base_patch(m, spec)
    q, cell = patch_nodes(patch, n)
    ids, x = patch.to_chart(q)
    jd = np.abs(np.linalg.det(patch.jacobian(q)))
    w = cell * jd * np.sqrt(np.linalg.det(metric(m, ids, x)))
    return ids, x, w


def _grid_expectation(m, spec, f, quad, n):
    ids, x, w = base_grid(m, spec, n)
    w = w * np.exp(-value(spec.base_potential, ids, x))
    return float(np.sum(w * _fibre_mean(m, spec, f, ids, x, quad)) / np.sum(w))


def integrate_mu(m: AtlasManifold, spec: BundleMeasureSpec, f: Callable[[TangentState], np.ndarray],
                 quad: QuadratureSpec = DEFAULT_QUAD):
    """``(E_mu f, error_estimate)``, base rule composed with the fibre rule.

    The grid error estimate compares with the half-resolution grid; the MC
    estimate is the standard error over exact base samples.
    """
    if quad.base_rule == "grid":
        val = _grid_expectation(m, spec, f, quad, quad.base_n)
        coarse = _grid_expectation(m, spec, f, quad, max(quad.base_n // 2, 4))
        return val, abs(val - coarse)
    rng = np.random.default_rng(quad.mc_seed)
    ids, x = sample_base(m, spec, quad.mc_n, rng)
    vals = _fibre_mean(m, spec, f, ids, x, quad)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(len(vals)))


# ---------------------------------------------------------------------------
# density


def mu_density_chart(m: AtlasManifold, spec: BundleMeasureSpec, s: TangentState, n: int = 64):
    """Density of mu in induced chart coordinates.

    Gaussian fibres: with respect to ``dx dv``.  Unit fibres: with respect to
    ``dx`` times the g-surface measure of the unit fibre.
    """
    ids, x, v = s.batch()
    d = x.shape[-1]
    z, _ = spec.normalization(m, n)
    g = metric(m, ids, x)
    detg = np.linalg.det(g)
    base = np.exp(-value(spec.base_potential, ids, x)) * np.sqrt(detg) / z
    if spec.fibre == GAUSSIAN:
        q = np.einsum("ni,nij,nj->n", v, g, v)
        fib = (spec.beta / (2.0 * np.pi)) ** (d / 2) * np.sqrt(detg) * np.exp(-0.5 * spec.beta * q)
    else:
        fib = np.full(len(ids), 1.0 / sphere_surface_area(d))
    out = base * fib
    return out if s.is_batch else float(out[0])


# ---------------------------------------------------------------------------
# sampling


def _envelope(m, spec, dens):
    if spec.envelope is not None:
        return spec.envelope
    key = ("envelope", m.name, repr(sorted(m.params.items())))
    if key not in spec._cache:
        k = {1: 4001, 2: 201, 3: 41}.get(m.dimension, 11)
        best = 0.0
        for c in m.charts:
            axes = [np.linspace(lo, hi, k) for lo, hi in c.sampling_box]
            q = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=-1)
            best = max(best, float(np.max(dens(np.full(len(q), c.chart_id), q))))
        spec._cache[key] = 1.05 * best
    return spec._cache[key]


def _uniform_base(m, spec) -> bool:
    return m.all_flat and spec.base_potential.name == "zero" and m.patch is not None and all(m.patch.periodic)


def sample_base(m: AtlasManifold, spec: BundleMeasureSpec, n: int, rng: np.random.Generator):
    """Exact samples ``(ids, x)`` of the normalized base measure.

    Rejection from the charts' sampling boxes against a constant envelope;
    each chart keeps only proposals in its ``sampling_region`` so that the
    regions tile the manifold.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    charts = [c for c in m.charts if c.sampling_box is not None]
    if not charts:
        raise NonCompactBase(f"{m.name}: no sampling box declared")
    d = m.dimension
    if _uniform_base(m, spec):
        c = charts[0]
        lo = np.array([b[0] for b in c.sampling_box])
        hi = np.array([b[1] for b in c.sampling_box])
        return np.full(n, c.chart_id, dtype=np.int64), lo + (hi - lo) * rng.random((n, d))

    def dens(ids, x):
        return np.exp(-value(spec.base_potential, ids, x)) * np.sqrt(np.linalg.det(metric(m, ids, x)))

    env = _envelope(m, spec, dens)
    vols = np.array([np.prod([hi - lo for lo, hi in c.sampling_box]) for c in charts])
    probs = vols / vols.sum()
    out_ids, out_x, have = [], [], 0
    while have < n:
        k = max(2 * (n - have), 1024)
        which = rng.choice(len(charts), size=k, p=probs)
        u = rng.random((k, d))
        acc = rng.random(k)
        ids = np.empty(k, dtype=np.int64)
        x = np.empty((k, d))
        keep = np.zeros(k, dtype=bool)
        for j, c in enumerate(charts):
            sel = which == j
            lo = np.array([b[0] for b in c.sampling_box])
            hi = np.array([b[1] for b in c.sampling_box])
            x[sel] = lo + (hi - lo) * u[sel]
            ids[sel] = c.chart_id
            inside = np.ones(int(sel.sum()), dtype=bool)
            if c.sampling_region is not None:
                inside = np.asarray(c.sampling_region(x[sel]), dtype=bool)
            keep[sel] = inside
        p = np.zeros(k)
        p[keep] = dens(ids[keep], x[keep])
        if np.any(p > env):
            raise EnvelopeViolation(f"{m.name}: density {p.max():.6g} exceeds envelope {env:.6g}")
        keep &= acc * env < p
        out_ids.append(ids[keep])
        out_x.append(x[keep])
        have += int(keep.sum())
    return np.concatenate(out_ids)[:n], np.concatenate(out_x)[:n]


def sample_fibre(m: AtlasManifold, spec: BundleMeasureSpec, ids, x, rng: np.random.Generator):
    zeta = rng.standard_normal(x.shape)
    v = np.einsum("nij,nj->ni", frame(metric(m, ids, x)), zeta)
    if spec.fibre == GAUSSIAN:
        return v / np.sqrt(spec.beta)
    return v / np.linalg.norm(zeta, axis=-1)[:, None]


def sample_mu(m: AtlasManifold, spec: BundleMeasureSpec, n: int, rng: np.random.Generator) -> TangentState:
    """``n`` i.i.d. samples of mu as one batched :class:`TangentState`."""
    ids, x = sample_base(m, spec, n, rng)
    return TangentState(ids, x, sample_fibre(m, spec, ids, x, rng))


def write_samples_csv(path, samples: TangentState) -> None:
    from .dynamics import write_states_csv

    write_states_csv(path, samples)
