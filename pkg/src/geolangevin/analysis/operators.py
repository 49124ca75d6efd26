"""Finite-difference generators and pointwise operator identities.

Test functions act on batched :class:`TangentState` objects; base test
functions act on :class:`ChartPoint` objects, like potentials.  First and
second differences use step ``h`` and one Richardson extrapolation with
``h / 2``.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from ..bundle import (TangentState, _householder_complement, spray_at, tangential_projection)
from ..dynamics import FldParams, LangevinParams
from ..errors import DegenerateGradient
from ..geometry import AtlasManifold, ChartPoint, as_batch, christoffel, frame, inner, metric
from ..measures import (DEFAULT_QUAD, BundleMeasureSpec, QuadratureSpec, _fibre_mean, base_grid, fibre_nodes)
from ..potentials import PotentialSpec, gradient, hessian, value

GEN_STEP = 1e-4

StateFn = Callable[[TangentState], np.ndarray]
BaseFn = Callable[[ChartPoint], np.ndarray]


def richardson(fd: Callable[[float], np.ndarray], h: float):
    """Second-order difference ``fd`` improved to fourth order."""
    return (4.0 * fd(0.5 * h) - fd(h)) / 3.0


def _as_state(s: TangentState) -> TangentState:
    ids, x, v = s.batch()
    return TangentState(ids, x, v)


def _directional(f: StateFn, s: TangentState, db, dv, h: float):
    def fd(k):
        return (f(s.moved(dx=k * db, dv=k * dv)) - f(s.moved(dx=-k * db, dv=-k * dv))) / (2 * k)

    return richardson(fd, h)


def _second_fibre(f: StateFn, s: TangentState, e, h: float, f0):
    def fd(k):
        return (f(s.moved(dv=k * e)) - 2.0 * f0 + f(s.moved(dv=-k * e))) / (k * k)

    return richardson(fd, h)


def _ids(s):
    return np.asarray(s.chart_id)


def spray_derivative(m: AtlasManifold, f: StateFn, s: TangentState, h: float = GEN_STEP):
    a = spray_at(m, s)
    return _directional(f, s, a.base, a.fibre, h)


def fibre_derivative(f: StateFn, s: TangentState, w, h: float = GEN_STEP):
    return _directional(f, s, 0.0, w, h)


def fibre_laplacian(m: AtlasManifold, f: StateFn, s: TangentState, h: float = GEN_STEP):
    """``g^{ij} d^2 f / dv^i dv^j`` via second differences in a g-orthonormal frame."""
    L = frame(metric(m, _ids(s), s.x))
    f0 = f(s)
    total = 0.0
    for a in range(s.x.shape[-1]):
        total = total + _second_fibre(f, s, L[..., :, a], h, f0)
    return total


def sphere_laplacian(m: AtlasManifold, f: StateFn, s: TangentState, h: float = GEN_STEP):
    """Laplace-Beltrami on the unit fibre sphere, great-circle differences."""
    g = metric(m, _ids(s), s.x)
    L = frame(g)
    u = np.linalg.solve(L, s.v[..., None])[..., 0]
    basis = _householder_complement(u)
    f0 = f(s)

    def fd(k):
        c, sn = np.cos(k), np.sin(k)
        total = 0.0
        for a in range(basis.shape[-1]):
            for sign in (1.0, -1.0):
                w = np.einsum("...ij,...j->...i", L, c * u + sign * sn * basis[..., a])
                total = total + f(TangentState(s.chart_id, s.x, w))
            total = total - 2.0 * f0
        return total / (k * k)

    return richardson(fd, h)


def _grad_psi(m, model, s):
    return gradient(m, model.potential, _ids(s), s.x)


def apply_generator_fd(m: AtlasManifold, model, f: StateFn, s: TangentState, h: float = GEN_STEP):
    """Kolmogorov generator of either model applied to ``f`` at ``s``.

    Langevin: ``S f - vlift(grad Psi) f + (alpha/beta) Delta_v f - alpha C f``.
    Fibre lay-down: ``S f - tlift(grad Psi) f + (sigma^2/2) Delta_S f``.
    """
    single = not s.is_batch
    s = _as_state(s)
    out = spray_derivative(m, f, s, h)
    gp = _grad_psi(m, model, s)
    if isinstance(model, LangevinParams):
        out = out - fibre_derivative(f, s, gp, h)
        if model.alpha:
            out = out + (model.alpha / model.beta) * fibre_laplacian(m, f, s, h)
            out = out - model.alpha * fibre_derivative(f, s, s.v, h)
    else:
        g = metric(m, _ids(s), s.x)
        out = out - fibre_derivative(f, s, tangential_projection(g, s.v, gp), h)
        out = out + 0.5 * model.sigma ** 2 * sphere_laplacian(m, f, s, h)
    out = np.asarray(out, dtype=float)
    return float(out[0]) if single else out


def antisymmetric_apply(m: AtlasManifold, model, f: StateFn, s: TangentState, h: float = GEN_STEP):
    """Transport part ``A`` of ``L = S - A``.

    Langevin: ``-S_g f + vlift(grad Psi) f``; fibre lay-down:
    ``-S_g f + tlift(grad Psi) f / (d - 1)``.
    """
    s = _as_state(s)
    out = -spray_derivative(m, f, s, h)
    gp = _grad_psi(m, model, s)
    if isinstance(model, LangevinParams):
        return out + fibre_derivative(f, s, gp, h)
    d = s.x.shape[-1]
    g = metric(m, _ids(s), s.x)
    return out + fibre_derivative(f, s, tangential_projection(g, s.v, gp), h) / (d - 1)


# ---------------------------------------------------------------------------
# base calculus


def base_gradient(m: AtlasManifold, f0: BaseFn, ids, x, h: float = 1e-3):
    """Coordinate differential of a base function (Richardson central differences)."""
    d = x.shape[-1]
    out = np.empty(x.shape)
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0

        def fd(k):
            return (np.asarray(f0(ChartPoint(ids, x + k * e))) - np.asarray(f0(ChartPoint(ids, x - k * e)))) / (2 * k)

        out[..., i] = richardson(fd, h)
    return out


def base_hessian(m: AtlasManifold, f0: BaseFn, ids, x, h: float = 1e-3):
    """Coordinate second derivatives ``d_ij f0`` (Richardson)."""
    d = x.shape[-1]
    out = np.empty(x.shape + (d,))
    f = lambda y: np.asarray(f0(ChartPoint(ids, y)), dtype=float)
    c = f(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = 1.0
        out[..., i, i] = richardson(lambda k: (f(x + k * ei) - 2 * c + f(x - k * ei)) / (k * k), h)
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = 1.0

            def fd(k):
                return (f(x + k * (ei + ej)) - f(x + k * (ei - ej)) - f(x - k * (ei - ej))
                        + f(x - k * (ei + ej))) / (4 * k * k)

            out[..., i, j] = out[..., j, i] = richardson(fd, h)
    return out


def laplace_beltrami(m: AtlasManifold, f0: BaseFn, ids, x, h: float = 1e-3):
    """``g^{ij} (d_ij f0 - G^k_ij d_k f0)``."""
    g = metric(m, ids, x)
    df = base_gradient(m, f0, ids, x, h)
    hs = base_hessian(m, f0, ids, x, h) - np.einsum("...kij,...k->...ij", christoffel(m, ids, x), df)
    return np.einsum("...ij,...ij->...", np.linalg.inv(g), hs)


def weighted_laplacian(m: AtlasManifold, phi: PotentialSpec, f0: BaseFn, ids, x, h: float = 1e-3):
    """``Delta f0 - g(grad Phi, grad f0)``."""
    dphi = base_gradient(m, lambda p: value(phi, p.chart_id, p.coords), ids, x, h)
    df = base_gradient(m, f0, ids, x, h)
    ginv = np.linalg.inv(metric(m, ids, x))
    return laplace_beltrami(m, f0, ids, x, h) - np.einsum("...i,...ij,...j->...", dphi, ginv, df)


# ---------------------------------------------------------------------------
# identities


def fibre_mean_function(m: AtlasManifold, spec: BundleMeasureSpec, f: StateFn,
                        quad: QuadratureSpec = DEFAULT_QUAD) -> BaseFn:
    """``x -> E_nu f(x)`` as a base function."""

    def ef(p: ChartPoint):
        ids, x, single = as_batch(p.chart_id, p.coords)
        out = _fibre_mean(m, spec, f, ids, x, quad)
        return out[0] if single else out

    return ef


def check_pap_zero(m: AtlasManifold, spec: BundleMeasureSpec, f0: BaseFn, g0: Optional[StateFn], p: ChartPoint,
                   quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``|P A P f|`` at ``p`` for ``f = f0(x) * g0(x, v)``.

    Uses ``A P f (v) = -g(v, grad E_nu f)``; the fibre quadrature of this odd
    function must vanish.  ``g0=None`` means ``g0 = 1``.
    """

    def f(s):
        base = np.asarray(f0(s.point), dtype=float)
        return base if g0 is None else base * np.asarray(g0(s), dtype=float)

    ids, x, single = as_batch(p.chart_id, p.coords)
    d_ef = base_gradient(m, fibre_mean_function(m, spec, f, quad), ids, x)
    v, w = fibre_nodes(m, spec, ids, x, quad)
    # g(v, grad E f) = v . dE f
    apf = -np.einsum("nki,ni->nk", v, d_ef)
    res = np.abs(apf @ w)
    return float(res[0]) if single else res


def check_pa2p(m: AtlasManifold, spec: BundleMeasureSpec, model, f0: BaseFn, p: ChartPoint,
               quad: QuadratureSpec = DEFAULT_QUAD, h: float = GEN_STEP, atol: float = 1e-9):
    """Compare ``P A^2 P f`` with the weighted base Laplacian of ``f0``.

    ``f = vlift(f0)``.  The left side applies ``A`` twice by nested finite
    differences at every fibre node and averages.  The right side is
    ``(Delta f0 - g(grad Phi, grad f0)) / beta`` for Langevin (``Phi`` the
    base weight exponent ``beta Psi``) and
    ``(Delta f0 - g(grad Psi, grad f0)) / d`` for fibre lay-down.

    Returns ``(lhs, rhs, relative_error)``.
    """
    ids, x, single = as_batch(p.chart_id, p.coords)
    d = x.shape[-1]
    v, w = fibre_nodes(m, spec, ids, x, quad)
    n, k, _ = v.shape
    s = TangentState(np.repeat(ids, k), np.repeat(x, k, axis=0), v.reshape(n * k, d))

    def f(st):
        return np.asarray(f0(st.point), dtype=float)

    def af(st):
        return antisymmetric_apply(m, model, f, st, h)

    a2 = antisymmetric_apply(m, model, af, s, h).reshape(n, k)
    lhs = a2 @ w
    pref = 1.0 / model.beta if isinstance(model, LangevinParams) else 1.0 / d
    rhs = pref * weighted_laplacian(m, spec.base_potential, f0, ids, x)
    rel = np.abs(lhs - rhs) / np.maximum(np.abs(rhs), atol)
    rel = np.where(np.abs(lhs - rhs) <= atol * 1e-3, 0.0, rel)
    if single:
        return float(lhs[0]), float(rhs[0]), float(rel[0])
    return lhs, rhs, rel


def ibp_terms(m: AtlasManifold, spec: BundleMeasureSpec, f0: BaseFn, g0: BaseFn, n: int = 128):
    """``(int Delta_w f0 g0 dLeb_w, int g(grad f0, grad g0) dLeb_w)`` on the base grid."""
    ids, x, vol = base_grid(m, spec, n)
    wts = vol * np.exp(-value(spec.base_potential, ids, x))
    lap = weighted_laplacian(m, spec.base_potential, f0, ids, x)
    g0v = np.asarray(g0(ChartPoint(ids, x)), dtype=float)
    ginv = np.linalg.inv(metric(m, ids, x))
    df = base_gradient(m, f0, ids, x)
    dg = base_gradient(m, g0, ids, x)
    form = np.einsum("ni,nij,nj->n", df, ginv, dg)
    return float(np.sum(wts * lap * g0v)), float(np.sum(wts * form))


def check_ibp(m: AtlasManifold, spec: BundleMeasureSpec, f0: BaseFn, g0: BaseFn, n: int = 128) -> float:
    """Residual of the weighted integration-by-parts formula on a compact base."""
    a, b = ibp_terms(m, spec, f0, g0, n)
    return abs(a + b)


def check_p3(potential: PotentialSpec, m: AtlasManifold, sample_points: ChartPoint):
    """Empirical ``sup |Hess Phi|_g / (1 + |grad Phi|_g)`` and the worst point."""
    ids, x, _ = as_batch(sample_points.chart_id, sample_points.coords)
    hs = hessian(m, potential, ids, x)
    g = metric(m, ids, x)
    ginv = np.linalg.inv(g)
    # Frobenius norm with indices raised by the metric
    hnorm = np.sqrt(np.maximum(np.einsum("nij,njk,nkl,nli->n", ginv, hs, ginv, hs), 0.0))
    gr = gradient(m, potential, ids, x)
    gnorm = np.sqrt(inner(g, gr, gr))
    ratio = hnorm / (1.0 + gnorm)
    k = int(np.argmax(ratio))
    return float(ratio[k]), ChartPoint(int(ids[k]), x[k])


def horizontal_function_lift(grad_f0: np.ndarray, v: np.ndarray, tol: float = 1e-12):
    """Euclidean horizontal lift ``v -> <v, grad f0 / |grad f0|>``.

    ``grad_f0`` has shape ``(n, d)``, fibre nodes ``v`` shape ``(n, K, d)``.
    """
    nrm = np.linalg.norm(grad_f0, axis=-1)
    if np.any(nrm < tol):
        raise DegenerateGradient("gradient vanishes; horizontal lift undefined")
    return np.einsum("nki,ni->nk", v, grad_f0 / nrm[..., None])


def check_fld_potential_condition_euclidean(psi: PotentialSpec, points: np.ndarray, g0: Optional[BaseFn] = None,
                                            n: int = 256) -> np.ndarray:
    """Worked Euclidean check of the fibre lay-down potential condition.

    At each point x the spray side is realized, as in the worked example, by
    the spherical gradient form ``int <grad_S <v, z>, grad_S(Psi g)> dnu``
    with ``z = grad Psi / (Psi |grad Psi|)`` and ``g`` the horizontal lift of
    ``g0``.  The other side is ``(d - 1) int Psi_h g dnu`` with ``Psi_h`` the
    horizontal lift of ``Psi``.  Both are computed by fibre quadrature
    (circle of ``n`` points for d = 2, 64 x 32 grid for d = 3).

    ``g0=None`` uses ``g0 = Psi``.  Returns the absolute residual per point.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    nx, d = x.shape
    ids = np.zeros(nx, dtype=np.int64)
    from ..geometry import euclidean

    m = euclidean(d)
    spec = BundleMeasureSpec(PotentialSpec(lambda p: np.zeros(np.shape(p.coords)[:-1])), "uniform_sphere")
    quad = QuadratureSpec(fibre_rule="circle_grid", n_circle=n) if d == 2 else QuadratureSpec()
    v, w = fibre_nodes(m, spec, ids, x, quad)
    psi_val = value(psi, ids, x)
    dpsi = base_gradient(m, lambda p: value(psi, p.chart_id, p.coords), ids, x)
    nrm = np.linalg.norm(dpsi, axis=-1)
    if np.any(nrm < 1e-12):
        raise DegenerateGradient("grad Psi vanishes at a test point")
    if np.any(psi_val <= 0):
        raise ValueError("the worked example needs Psi > 0")
    z = dpsi / (psi_val * nrm)[:, None]
    dg = dpsi if g0 is None else base_gradient(m, g0, ids, x)
    ng = np.linalg.norm(dg, axis=-1)
    if np.any(ng < 1e-12):
        return np.zeros(nx)
    ndir = dg / ng[:, None]
    gch = horizontal_function_lift(dg, v)
    psi_h = horizontal_function_lift(dpsi, v)
    eye = np.eye(d)
    proj = eye - np.einsum("nki,nkj->nkij", v, v)
    grad_u = np.einsum("nkij,nj->nki", proj, z)
    grad_g = psi_val[:, None, None] * np.einsum("nkij,nj->nki", proj, ndir)
    lhs = np.einsum("nki,nki->nk", grad_u, grad_g) @ w
    rhs = (d - 1) * ((psi_h * gch) @ w)
    return np.abs(lhs - rhs)


# ---------------------------------------------------------------------------
# geometry-level checks


def random_states(m: AtlasManifold, n: int, rng: np.random.Generator, radius: float = 1.4, unit: bool = False):
    """Random states spread over the charts, velocities g-normal (or g-unit)."""
    d = m.dimension
    cids = np.array([c.chart_id for c in m.charts])
    ids = cids[rng.integers(0, len(cids), n)]
    if m.patch is not None and all(m.patch.periodic):
        lo = np.array([b[0] for b in m.patch.bounds])
        hi = np.array([b[1] for b in m.patch.bounds])
        x = lo + (hi - lo) * rng.random((n, d))
    else:
        x = rng.uniform(-radius, radius, (n, d))
    zeta = rng.standard_normal((n, d))
    if unit:
        zeta /= np.linalg.norm(zeta, axis=-1, keepdims=True)
    v = np.einsum("nij,nj->ni", frame(metric(m, ids, x)), zeta)
    return TangentState(ids, x, v)


def liouville_residual(m: AtlasManifold, n: int = 1000, seed: int = 0) -> float:
    """``max |div_Sasaki(spray)|`` over random states."""
    from ..bundle import sasaki_divergence_fd

    s = random_states(m, n, np.random.default_rng(seed))
    return float(np.max(np.abs(sasaki_divergence_fd(m, lambda st: spray_at(m, st), s))))


def eigenrelation_residual(m: AtlasManifold, n: int = 200, seed: int = 0) -> float:
    """``max |Delta_S g(v, z) + (d - 1) g(v, z)|`` over random unit states and z."""
    from ..bundle import spherical_laplacian_fd

    rng = np.random.default_rng(seed)
    s = random_states(m, n, rng, unit=True)
    z = rng.standard_normal(s.x.shape)
    d = m.dimension

    def gz(st):
        return inner(metric(m, np.asarray(st.chart_id), st.x), st.v, z)

    return float(np.max(np.abs(spherical_laplacian_fd(m, s, gz) + (d - 1) * gz(s))))


def great_circle_error(m: AtlasManifold, t_final: float = np.pi, dt: float = 1e-3, seed: int = 0) -> float:
    """Embedded endpoint error of a sphere geodesic against ``cos t p + sin t w``."""
    from ..geometry import embed, integrate_geodesic, sphere_chart_from_embedding

    rng = np.random.default_rng(seed)
    p = rng.standard_normal(3)
    p[2] = abs(p[2]) + 0.5
    p /= np.linalg.norm(p)
    w = rng.standard_normal(3)
    w -= (w @ p) * p
    w /= np.linalg.norm(w)
    start = sphere_chart_from_embedding(p)
    u = np.asarray(start.coords)
    # pull the ambient unit tangent w back to chart components
    emb = m.chart(int(start.chart_id)).embed_fn
    h = 1e-6
    jac = np.stack([(emb(u + h * e) - emb(u - h * e)) / (2 * h) for e in np.eye(2)], axis=-1)
    v = np.linalg.lstsq(jac, w, rcond=None)[0]
    end, _ = integrate_geodesic(m, start, v, t_final, dt)
    exact = np.cos(t_final) * p + np.sin(t_final) * w
    return float(np.linalg.norm(embed(m, end) - exact))
