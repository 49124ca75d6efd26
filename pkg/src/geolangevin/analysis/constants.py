"""Coercivity constants, Poincare gap estimation and the DMS rate.

The rate reconstruction works with the modified entropy
``H = ||f||^2 / 2 + eps <B f, f>``, ``|<B f, f>| <= ||f||^2 / 2``, whose
dissipation is bounded below by the quadratic form

    Q(eps) = [[lambda_m,            -eps (c1 + c2) / 2],
              [-eps (c1 + c2) / 2,   eps lambda_M      ]]

in ``(||(I - P) f||, ||P f||)``.  With ``H <= (1 + eps) ||f||^2 / 2`` this
gives ``kappa2(eps) = lambda_min(Q(eps)) / (1 + eps)`` and the norm
equivalence gives ``kappa1 = sqrt((1 + eps) / (1 - eps))``.  ``eps`` is
chosen by golden-section search over the region where ``Q`` is positive
definite, ``eps < min(1, 4 lambda_m lambda_M / (c1 + c2)^2)``.

``form="classical"`` uses the textbook variant with the macroscopic entry
``eps lambda_M / (1 + lambda_M)`` and microscopic entry ``lambda_m - eps``;
it is not homogeneous under common scaling of the constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..bundle import TangentState
from ..dynamics import FldParams, LangevinParams
from ..errors import InfeasibleConstants, NonCompactBase
from ..geometry import AtlasManifold, metric
from ..measures import DEFAULT_QUAD, BundleMeasureSpec, QuadratureSpec, _fibre_mean, fibre_nodes, patch_nodes
from ..potentials import PotentialSpec, value

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _check_d(d):
    if d < 2:
        raise ValueError("unit-fibre constants need d >= 2")


def microscopic_constant(model, d: int = 2):
    """Fibre coercivity: ``alpha`` (Langevin) or ``(d - 1) sigma^2 / 2``."""
    if isinstance(model, LangevinParams):
        return model.alpha
    _check_d(d)
    return (d - 1) * model.sigma ** 2 / 2


def macroscopic_constant(lam, model, d: int = 2):
    """Base coercivity from a Poincare constant: ``lam / beta`` or ``lam / d``."""
    if not lam > 0:
        raise ValueError("Poincare constant must be positive")
    if isinstance(model, LangevinParams):
        return lam / model.beta
    _check_d(d)
    return lam / d


def c1_constant(model, d: int = 2):
    """``alpha / 2`` (Langevin) or ``(d - 1) sigma^2 / 4``."""
    if isinstance(model, LangevinParams):
        return model.alpha / 2
    _check_d(d)
    return (d - 1) * model.sigma ** 2 / 4


# ---------------------------------------------------------------------------
# DMS rate


@dataclass(frozen=True)
class DmsConstants:
    lambda_m: float
    lambda_M: float
    c1: float
    c2: float

    def __post_init__(self):
        for name in ("lambda_m", "lambda_M", "c1", "c2"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise InfeasibleConstants(f"{name} must be positive and finite, got {val!r}")

    def scaled(self, t: float) -> "DmsConstants":
        return DmsConstants(t * self.lambda_m, t * self.lambda_M, t * self.c1, t * self.c2)


@dataclass(frozen=True)
class RateBundle:
    kappa1: float
    kappa2: float
    epsilon: float


def _q_matrix(k: DmsConstants, eps: float, form: str):
    c = k.c1 + k.c2
    if form == "classical":
        return np.array([[k.lambda_m - eps, -eps * c / 2], [-eps * c / 2, eps * k.lambda_M / (1 + k.lambda_M)]])
    return np.array([[k.lambda_m, -eps * c / 2], [-eps * c / 2, eps * k.lambda_M]])


def kappa2_of_eps(k: DmsConstants, eps: float, form: str = "homogeneous") -> float:
    """Rate guaranteed by the entropy functional with mixing weight ``eps``."""
    lam = np.linalg.eigvalsh(_q_matrix(k, eps, form))[0]
    return float(lam / (1.0 + eps))


def _feasible_limit(k: DmsConstants, form: str) -> float:
    c = k.c1 + k.c2
    if form == "classical":
        mm = k.lambda_M / (1 + k.lambda_M)
        # det > 0: (lm - e) e mm > e^2 c^2 / 4  <=>  e < lm mm / (mm + c^2 / 4)
        return min(1.0, k.lambda_m * mm / (mm + c * c / 4), k.lambda_m)
    return min(1.0, 4.0 * k.lambda_m * k.lambda_M / (c * c))


def golden_section_max(fun, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200):
    """Maximizer of a unimodal function on ``[lo, hi]``."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def dms_rate(k: DmsConstants, form: str = "homogeneous") -> RateBundle:
    """Optimized ``(kappa1, kappa2, eps)`` from the four hypocoercivity constants."""
    if form not in ("homogeneous", "classical"):
        raise ValueError(f"unknown form {form!r}")
    hi = _feasible_limit(k, form) * (1.0 - 1e-12)
    if not hi > 0:
        raise InfeasibleConstants("no mixing weight makes the dissipation form positive")
    eps = golden_section_max(lambda e: kappa2_of_eps(k, e, form), 0.0, hi)
    k2 = kappa2_of_eps(k, eps, form)
    if not k2 > 0:
        raise InfeasibleConstants("optimized rate is not positive")
    return RateBundle(kappa1=float(np.sqrt((1 + eps) / (1 - eps))), kappa2=k2, epsilon=float(eps))


# ---------------------------------------------------------------------------
# Poincare constant


def weighted_laplacian_system(m: AtlasManifold, phi: PotentialSpec, grid_n: int = 128):
    """Finite-volume stiffness ``K`` and diagonal mass ``M`` of ``-Delta_w``.

    Works on the manifold's grid patch, whose pulled-back metric is diagonal.
    Returns ``(K, mass, ids, x)`` with ``mass`` the lumped weights
    ``e^{-Phi} dvol`` at the nodes.
    """
    if not m.compact or m.patch is None:
        raise NonCompactBase(f"{m.name}: Poincare estimate needs a compact base with a grid patch")
    patch = m.patch
    dim = len(patch.bounds)
    nodes, widths = patch.axes(grid_n)
    shape = tuple(len(a) for a in nodes)
    q, cell = patch_nodes(patch, grid_n)

    def density_and_inverse_metric(qq):
        ids, x = patch.to_chart(qq)
        J = patch.jacobian(qq)
        G = np.einsum("...ki,...kl,...lj->...ij", J, metric(m, ids, x), J)
        rho = np.exp(-value(phi, ids, x)) * np.sqrt(np.linalg.det(G))
        return rho, 1.0 / np.diagonal(G, axis1=-2, axis2=-1)

    rho, _ = density_and_inverse_metric(q)
    mass = rho * cell
    idx = np.arange(q.shape[0]).reshape(shape)
    rows, cols, vals = [], [], []
    for ax in range(dim):
        h = widths[ax]
        if patch.periodic[ax]:
            a = idx.reshape(-1)
            b = np.roll(idx, -1, axis=ax).reshape(-1)
        else:
            sl = [slice(None)] * dim
            sl[ax] = slice(0, -1)
            a = idx[tuple(sl)].reshape(-1)
            sl[ax] = slice(1, None)
            b = idx[tuple(sl)].reshape(-1)
        qa, qb = q[a], q[b].copy()
        if patch.periodic[ax]:
            lo, hi = patch.bounds[ax]
            wrap = qb[:, ax] < qa[:, ax]
            qb[wrap, ax] += hi - lo
        mid = 0.5 * (qa + qb)
        r, ginv = density_and_inverse_metric(mid)
        c = r * ginv[:, ax] * cell / (h * h)
        rows += [a, b, a, b]
        cols += [a, b, b, a]
        vals += [c, c, -c, -c]
    n = q.shape[0]
    K = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    ids, x = patch.to_chart(q)
    return K, mass, ids, x


def estimate_poincare(m: AtlasManifold, potential: PotentialSpec, grid_n: int = 128, dense_limit: int = 2500) -> float:
    """Smallest nonzero eigenvalue of ``-Delta_w`` for the weight ``e^{-potential}``."""
    K, mass, _, _ = weighted_laplacian_system(m, potential, grid_n)
    s = 1.0 / np.sqrt(mass)
    A = sp.diags(s) @ K @ sp.diags(s)
    n = A.shape[0]
    if n <= dense_limit:
        # the null vector sqrt(mass) is known; lift it above the spectrum instead of
        # thresholding, since round-off on a badly scaled A swamps the zero eigenvalue
        dense = A.toarray()
        q = np.sqrt(mass) / np.linalg.norm(np.sqrt(mass))
        dense += np.abs(dense).sum(axis=1).max() * np.outer(q, q)
        return float(scipy.linalg.eigh(dense, eigvals_only=True, subset_by_index=[0, 0])[0])
    else:
        ev = spla.eigsh(A.tocsc(), k=4, sigma=-1e-3, which="LM", return_eigenvectors=False)
    ev = np.sort(np.real(ev))
    scale = max(abs(ev[-1]), 1.0)
    nonzero = ev[ev > 1e-8 * scale]
    return float(nonzero[0])


# ---------------------------------------------------------------------------
# c2 witness


def default_c2_family(d: int, n: int = 24):
    """Test functions ``f0(x) q(v)``: trigonometric ``f0``, quadratic or quartic ``q``.

    Even ``q`` is needed: odd fibre polynomials have ``P A^2 (I - P) f = 0``
    on flat bases with vanishing potential.
    """
    pairs = [(a, b) for a in range(d) for b in range(a, d)]
    fam = []
    k = 0
    while len(fam) < n:
        a, b = pairs[k % len(pairs)]
        i = (k // len(pairs)) % d
        freq = 1 + (k // (len(pairs) * d)) % 2
        trig = np.cos if (k // 2) % 2 == 0 else np.sin
        quartic = k % 5 == 4

        def f(s, i=i, a=a, b=b, freq=freq, trig=trig, quartic=quartic):
            q = s.v[..., a] * s.v[..., b]
            return trig(freq * s.x[..., i]) * (q * q if quartic else q)

        fam.append(f)
        k += 1
    return fam


def estimate_c2(m: AtlasManifold, spec: BundleMeasureSpec, model, test_family: Optional[Sequence] = None,
                grid_n: int = 16, quad: Optional[QuadratureSpec] = None, h: float = 1e-4) -> float:
    """Empirical lower-bound witness for ``c2`` (not a rigorous bound).

    For each test function ``f`` forms ``u = (I - PA^2P)^{-1} (-P A^2 (I - P) f)``
    by solving ``(M + k K) u = M h`` on the Poincare grid, with ``k`` the
    model prefactor (``1/beta`` or ``1/d``), and returns
    ``max ||u|| / ||(I - P) f||``.  Functions with ``(I - P) f = 0`` are
    skipped.
    """
    from .operators import antisymmetric_apply

    if test_family is None:
        test_family = default_c2_family(m.dimension)
    if len(test_family) < 20:
        raise ValueError("estimate_c2 needs at least 20 test functions")
    if quad is None:
        quad = QuadratureSpec(order=6, n_theta=16, n_phi=8)
    d = m.dimension
    K, mass, ids, x = weighted_laplacian_system(m, spec.base_potential, grid_n)
    z = mass.sum()
    pref = 1.0 / model.beta if isinstance(model, LangevinParams) else 1.0 / d
    v, w = fibre_nodes(m, spec, ids, x, quad)
    n, kk, _ = v.shape
    st = TangentState(np.repeat(ids, kk), np.repeat(x, kk, axis=0), v.reshape(n * kk, d))
    system = (sp.diags(mass) + pref * K).tocsc()
    solve = spla.factorized(system)
    best = 0.0
    for f in test_family:

        def centered(s, f=f):
            si, sx, _ = s.batch()
            return np.asarray(f(s), dtype=float) - _fibre_mean(m, spec, f, si, sx, quad)

        c = centered(st).reshape(n, kk)
        norm_c = np.sqrt(np.sum(mass * ((c * c) @ w)) / z)
        if norm_c < 1e-10:
            continue

        def ac(s, centered=centered):
            return antisymmetric_apply(m, model, centered, s, h)

        a2 = antisymmetric_apply(m, model, ac, st, h).reshape(n, kk) @ w
        u = solve(mass * (-a2))
        norm_u = np.sqrt(np.sum(mass * u * u) / z)
        best = max(best, float(norm_u / norm_c))
    return best
