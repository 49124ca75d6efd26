"""Stochastic integrators for the geometric Langevin and fibre lay-down SDEs.

Both models are integrated in chart coordinates with a symmetric splitting.
The free-transport part is the exact (RK4) geodesic flow of the chart, which
may switch charts; the fibre parts act at frozen base point.

Langevin, one step of size dt (h = dt/2)::

    O(h)  v <- e^{-alpha h} v + sqrt((1 - e^{-2 alpha h}) / beta) L zeta
    B(h)  v <- v - h grad Psi
    A(dt) geodesic flow
    B(h), O(h)

with ``L L^T = g^{-1}``.  Fibre lay-down, one step::

    A(dt/2); v <- normalize(v + dt P_v(-grad Psi) + sigma sqrt(dt) P_v(L zeta)); A(dt/2)

where ``P_v`` is the g-orthogonal projection onto the complement of ``v``.
Renormalized projected Euler-Maruyama has the spherical Brownian generator
``(sigma^2 / 2) Delta_S`` at weak order one.

Random numbers: trajectory ``i`` of a run seeded with ``seed`` draws all of
its normals from ``np.random.default_rng([seed, i])``, in step order.
Results therefore do not depend on batching or on the number of workers.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .bundle import TangentState, metric_norm
from .errors import GeoLangevinError, NotUnitState
from .geometry import AtlasManifold, as_batch, frame, geodesic_flow, inner, metric, per_chart
from .potentials import PotentialSpec, gradient

BLOCK_SIZE = 4096
NOISE_CHUNK = 128
WORKERS_ENV = "GEOLANGEVIN_WORKERS"
SCHEMES = ("strang_baoab_like", "euler_heun")


@dataclass(frozen=True)
class LangevinParams:
    alpha: float
    beta: float
    potential: PotentialSpec
    sigma: Optional[float] = None

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        expected = float(np.sqrt(2.0 * self.alpha / self.beta))
        if self.sigma is None:
            object.__setattr__(self, "sigma", expected)
        elif abs(self.sigma - expected) >= 1e-12:
            raise ValueError(f"sigma must equal sqrt(2 alpha / beta) = {expected!r}, got {self.sigma!r}")


@dataclass(frozen=True)
class FldParams:
    sigma: float
    potential: PotentialSpec

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


Model = Union[LangevinParams, FldParams]


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_final: float
    record_stride: int = 1
    seed: int = 0
    scheme: str = "strang_baoab_like"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_final < 0:
            raise ValueError("t_final must be nonnegative")
        if self.t_final > 0 and not self.dt < self.t_final + 1e-15:
            raise ValueError("dt must not exceed t_final")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    states: TangentState
    chart_switch_events: list = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    def to_csv(self, path) -> None:
        write_states_csv(path, self.states, self.times)


class EnsembleError(GeoLangevinError):
    """One or more trajectory blocks failed; ``errors`` lists ``(indices, exception)``."""

    def __init__(self, errors):
        self.errors = errors
        first = errors[0][1]
        super().__init__(f"{len(errors)} block(s) failed; first: {type(first).__name__}: {first}")


def write_states_csv(path, states: TangentState, times=None) -> None:
    ids, x, v = states.batch()
    d = x.shape[-1]
    header = ([] if times is None else ["t"]) + ["chart_id"] + [f"x{i + 1}" for i in range(d)] + [
        f"v{i + 1}" for i in range(d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(len(ids)):
            row = [] if times is None else [repr(float(times[k]))]
            row.append(int(ids[k]))
            row.extend(repr(float(a)) for a in x[k])
            row.extend(repr(float(a)) for a in v[k])
            w.writerow(row)


# ---------------------------------------------------------------------------
# random streams


class TrajectoryStreams:
    """Independent normal streams keyed by ``(seed, trajectory index)``."""

    def __init__(self, seed: int, indices: Sequence[int]):
        self.gens = [np.random.default_rng([int(seed), int(i)]) for i in indices]

    def draw(self, n_steps: int, k: int) -> np.ndarray:
        """Normals of shape ``(n_steps, n_traj, k)``."""
        return np.stack([g.standard_normal((n_steps, k)) for g in self.gens], axis=1)


def noise_dim(model: Model, d: int, scheme: str) -> int:
    if isinstance(model, LangevinParams) and scheme == "strang_baoab_like":
        return 2 * d
    return d


# ---------------------------------------------------------------------------
# batched steps on (ids, x, v); every step returns (ids, x, v, switched, previous_ids)


def _geodesic_part(m, ids, x, v, dt):
    ids, x, v, _, switched, prev = geodesic_flow(m, ids, x, v, dt)
    return ids, x, v, switched, prev


def _merge_switch(sw1, prev1, sw2):
    # previous chart reported for a point that switched in either half
    return sw1 | sw2, prev1


def _flat(m, ids) -> bool:
    return all(m.chart(int(c)).flat for c in np.unique(ids))


def _frame_of(m, ids, g):
    # flat charts have a constant metric, so one factorization serves the batch
    if _flat(m, ids):
        return np.broadcast_to(frame(g[:1]), g.shape)
    return frame(g)


def _apply(mat, w):
    return np.einsum("...ij,...j->...i", mat, w)


def _frame_noise(m, ids, x, zeta, g=None):
    g = metric(m, ids, x) if g is None else g
    return _apply(_frame_of(m, ids, g), zeta)


def _ou_half(m, ids, x, v, p: LangevinParams, h, zeta):
    if p.alpha == 0:
        return v
    c = np.exp(-p.alpha * h)
    s = np.sqrt((1.0 - np.exp(-2.0 * p.alpha * h)) / p.beta)
    return c * v + s * _frame_noise(m, ids, x, zeta)


def langevin_strang(m, ids, x, v, p: LangevinParams, dt, z):
    d = x.shape[-1]
    h = 0.5 * dt
    v = _ou_half(m, ids, x, v, p, h, z[:, :d])
    v = v - h * gradient(m, p.potential, ids, x)
    ids, x, v, sw, prev = _geodesic_part(m, ids, x, v, dt)
    v = v - h * gradient(m, p.potential, ids, x)
    v = _ou_half(m, ids, x, v, p, h, z[:, d:])
    return ids, x, v, sw, prev


def _g_inner(g, a, b):
    return np.sum(a * _apply(g, b), axis=-1)


def _normalize_g(g, v):
    return v / np.sqrt(_g_inner(g, v, v))[..., None]


def _project_g(g, u, w):
    return w - _g_inner(g, w, u)[..., None] * u


def _normalize(m, ids, x, v):
    return _normalize_g(metric(m, ids, x), v)


def _project(m, ids, x, u, w):
    return _project_g(metric(m, ids, x), u, w)


def fld_strang(m, ids, x, v, p: FldParams, dt, z):
    ids, x, v, sw1, prev1 = _geodesic_part(m, ids, x, v, 0.5 * dt)
    g = metric(m, ids, x)
    drift = _project_g(g, v, -gradient(m, p.potential, ids, x))
    noise = _project_g(g, v, _frame_noise(m, ids, x, z, g))
    v = _normalize_g(g, v + dt * drift + p.sigma * np.sqrt(dt) * noise)
    ids, x, v, sw2, _ = _geodesic_part(m, ids, x, v, 0.5 * dt)
    v = _normalize(m, ids, x, v)
    sw, prev = _merge_switch(sw1, prev1, sw2)
    return ids, x, v, sw, prev


def _coordinate_drift(m, ids, x, v, model):
    from .geometry import christoffel

    gam = christoffel(m, ids, x)
    acc = -np.einsum("...kij,...i,...j->...k", gam, v, v)
    force = -gradient(m, model.potential, ids, x)
    if isinstance(model, LangevinParams):
        return v, acc + force - model.alpha * v
    return v, acc + _project(m, ids, x, v, force)


def _heun(m, ids, x, v, model, dt, z):
    sq = np.sqrt(dt)
    fld = isinstance(model, FldParams)

    def diffusion(xx, vv):
        eta = model.sigma * sq * _frame_noise(m, ids, xx, z)
        return _project(m, ids, xx, vv, eta) if fld else eta

    bx, bv = _coordinate_drift(m, ids, x, v, model)
    nz = diffusion(x, v)
    xp, vp = x + dt * bx, v + dt * bv + nz
    if fld:
        vp = _normalize(m, ids, xp, vp)
    bx2, bv2 = _coordinate_drift(m, ids, xp, vp, model)
    nz2 = diffusion(xp, vp)
    xn = x + 0.5 * dt * (bx + bx2)
    vn = v + 0.5 * dt * (bv + bv2) + 0.5 * (nz + nz2)
    if fld:
        vn = _normalize(m, ids, xn, vn)
    from .geometry import switch_charts, _check_escape

    ids = ids.copy()
    ids, xn, vecs, sw, prev = switch_charts(m, ids, xn, [vn])
    _check_escape(m, ids, xn)
    return ids, xn, vecs[0], sw, prev


def step_batch(m, ids, x, v, model: Model, dt: float, z: np.ndarray, scheme: str = "strang_baoab_like"):
    if scheme == "euler_heun":
        return _heun(m, ids, x, v, model, dt, z)
    if isinstance(model, LangevinParams):
        return langevin_strang(m, ids, x, v, model, dt, z)
    return fld_strang(m, ids, x, v, model, dt, z)


def _single_step(m, s: TangentState, model, dt, rng, scheme):
    ids, x, v = s.batch()
    k = noise_dim(model, x.shape[-1], scheme)
    z = rng.standard_normal((len(ids), k))
    ids, x, v, _, _ = step_batch(m, ids, x.copy(), v.copy(), model, dt, z, scheme)
    if s.is_batch:
        return TangentState(ids, x, v)
    return TangentState(int(ids[0]), x[0], v[0])


def langevin_step(m: AtlasManifold, s: TangentState, params: LangevinParams, dt: float,
                  rng: np.random.Generator, scheme: str = "strang_baoab_like") -> TangentState:
    """One splitting step of the geometric Langevin SDE."""
    return _single_step(m, s, params, dt, rng, scheme)


def fld_step(m: AtlasManifold, s: TangentState, params: FldParams, dt: float,
             rng: np.random.Generator, scheme: str = "strang_baoab_like") -> TangentState:
    """One step of the fibre lay-down SDE on the unit tangent bundle."""
    _check_unit(m, s)
    return _single_step(m, s, params, dt, rng, scheme)


def _check_unit(m, s, tol=1e-8):
    if np.any(np.abs(metric_norm(m, s) - 1.0) > tol):
        raise NotUnitState("fibre lay-down states need unit metric speed")


# ---------------------------------------------------------------------------
# propagation


@dataclass
class RunResult:
    """Arrays from a batched run; leading axis indexes the recorded times."""

    steps: np.ndarray
    ids: np.ndarray
    x: np.ndarray
    v: np.ndarray
    integrals: Optional[np.ndarray] = None
    events: list = field(default_factory=list)


def propagate(m: AtlasManifold, model: Model, ids, x, v, n_steps: int, dt: float, streams: TrajectoryStreams,
              scheme: str = "strang_baoab_like", record_steps: Optional[Sequence[int]] = None,
              integrand: Optional[Callable[[TangentState], np.ndarray]] = None,
              integral_steps: Sequence[int] = ()) -> RunResult:
    """Advance a batch ``n_steps`` times.

    ``record_steps`` lists step indices (0 = initial state) to store.
    With ``integrand``, trapezoidal integrals of ``integrand`` along each path
    from time 0 to every step in ``integral_steps`` are returned as well.
    """
    ids = np.array(ids, dtype=np.int64)
    x = np.array(x, dtype=float)
    v = np.array(v, dtype=float)
    n, d = x.shape
    k = noise_dim(model, d, scheme)
    rec = sorted(set(int(s) for s in (record_steps if record_steps is not None else [n_steps])))
    rec_set = set(rec)
    out_ids, out_x, out_v = [], [], []
    int_set = sorted(set(int(s) for s in integral_steps))
    integrals = []
    events: list = []

    def store():
        out_ids.append(ids.copy())
        out_x.append(x.copy())
        out_v.append(v.copy())

    acc = np.zeros(n)
    f_prev = None
    if integrand is not None:
        f_prev = np.asarray(integrand(TangentState(ids, x, v)), dtype=float)
        if 0 in int_set:
            integrals.append(acc.copy())
    if 0 in rec_set:
        store()
    done = 0
    while done < n_steps:
        chunk = min(NOISE_CHUNK, n_steps - done)
        zs = streams.draw(chunk, k)
        for j in range(chunk):
            ids, x, v, sw, prev = step_batch(m, ids, x, v, model, dt, zs[j], scheme)
            done += 1
            if sw.any():
                t = done * dt
                for i in np.flatnonzero(sw):
                    events.append((int(i), t, int(prev[i]), int(ids[i])))
            if integrand is not None:
                f_new = np.asarray(integrand(TangentState(ids, x, v)), dtype=float)
                acc = acc + 0.5 * dt * (f_prev + f_new)
                f_prev = f_new
                if done in int_set:
                    integrals.append(acc.copy())
            if done in rec_set:
                store()
    return RunResult(
        steps=np.array(rec, dtype=int),
        ids=np.array(out_ids).reshape(len(out_ids), n),
        x=np.array(out_x).reshape(len(out_x), n, d),
        v=np.array(out_v).reshape(len(out_v), n, d),
        integrals=np.array(integrals).reshape(len(integrals), n) if integrand is not None else None,
        events=events,
    )


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, min(8, os.cpu_count() or 1))


def _stack_inits(inits) -> TangentState:
    if isinstance(inits, TangentState):
        ids, x, v = inits.batch()
        return TangentState(ids, x, v)
    inits = list(inits)
    if not inits:
        raise ValueError("need at least one initial state")
    ids = np.concatenate([s.batch()[0] for s in inits])
    x = np.concatenate([s.batch()[1] for s in inits])
    v = np.concatenate([s.batch()[2] for s in inits])
    return TangentState(ids, x, v)


def run_blocks(m: AtlasManifold, inits, model: Model, dt: float, n_steps: int, seed: int,
               scheme: str = "strang_baoab_like", record_steps=None, integrand=None, integral_steps=(),
               workers: Optional[int] = None, first_index: int = 0) -> RunResult:
    """Concurrent batched run over fixed-size trajectory blocks.

    Trajectory ``i`` (0-based, offset by ``first_index``) always uses stream
    ``(seed, first_index + i)``, so the merged result is independent of the
    worker count.
    """
    st = _stack_inits(inits)
    ids, x, v = st.batch()
    if isinstance(model, FldParams):
        _check_unit(m, st)
    n = len(ids)
    blocks = [np.arange(a, min(a + BLOCK_SIZE, n)) for a in range(0, n, BLOCK_SIZE)]

    def work(idx):
        streams = TrajectoryStreams(seed, idx + first_index)
        try:
            return propagate(m, model, ids[idx], x[idx], v[idx], n_steps, dt, streams, scheme,
                             record_steps, integrand, integral_steps)
        except GeoLangevinError as exc:
            return exc

    workers = workers or default_workers()
    if workers == 1 or len(blocks) == 1:
        results = [work(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, blocks))
    errors = [(b, r) for b, r in zip(blocks, results) if isinstance(r, Exception)]
    if errors:
        raise EnsembleError(errors)
    events = []
    for b, r in zip(blocks, results):
        events.extend((int(b[i]), t, a, c) for i, t, a, c in r.events)
    return RunResult(
        steps=results[0].steps,
        ids=np.concatenate([r.ids for r in results], axis=1),
        x=np.concatenate([r.x for r in results], axis=1),
        v=np.concatenate([r.v for r in results], axis=1),
        integrals=None if integrand is None else np.concatenate([r.integrals for r in results], axis=1),
        events=events,
    )


def _record_steps(cfg: IntegratorConfig):
    n = cfg.n_steps
    steps = list(range(0, n + 1, cfg.record_stride))
    return steps


def simulate_ensemble(m: AtlasManifold, inits, model: Model, cfg: IntegratorConfig,
                      workers: Optional[int] = None) -> list:
    """Independent trajectories, one per initial state."""
    steps = _record_steps(cfg)
    res = run_blocks(m, inits, model, cfg.dt, cfg.n_steps, cfg.seed, cfg.scheme, steps, workers=workers)
    times = res.steps * cfg.dt
    n = res.ids.shape[1]
    per_traj = [[] for _ in range(n)]
    for i, t, a, b in res.events:
        per_traj[i].append((t, a, b))
    return [Trajectory(times.copy(), TangentState(res.ids[:, i], res.x[:, i], res.v[:, i]), per_traj[i])
            for i in range(n)]


def simulate_trajectory(m: AtlasManifold, init: TangentState, model: Model, cfg: IntegratorConfig) -> Trajectory:
    """Single trajectory; identical to entry 0 of :func:`simulate_ensemble`."""
    if init.is_batch and len(init) != 1:
        raise ValueError("simulate_trajectory takes a single initial state")
    return simulate_ensemble(m, [init], model, cfg, workers=1)[0]


def base_path(traj: Trajectory):
    """Projected positions ``pi(eta_t)`` as a batched chart point."""
    return traj.states.point


def path_length(m: AtlasManifold, traj: Trajectory) -> float:
    """Metric length of the recorded base polyline.

    Segments are measured in the chart of their start point; for periodic
    charts the coordinate increment is taken modulo the period.
    """
    ids, x, _ = traj.states.batch()
    total = 0.0
    for k in range(len(ids) - 1):
        a, b = x[k], x[k + 1]
        if ids[k + 1] != ids[k]:
            t = m.find_transition(int(ids[k + 1]), int(ids[k]))
            b = t.map_fn(b)
        dx = b - a
        c = m.chart(int(ids[k]))
        if c.wrap_fn is not None:
            dx = (dx + np.pi) % (2 * np.pi) - np.pi
        mid = a + 0.5 * dx
        g = c.metric_fn(mid)
        total += float(np.sqrt(dx @ g @ dx))
    return total
