"""Potentials on the base manifold and a small named registry.

A potential is evaluated chart-wise: ``psi_fn(point)`` receives a
:class:`ChartPoint` (possibly batched) and returns the values.  The optional
``grad_fn`` returns the coordinate components of the metric gradient
``g^{-1} dPsi``; without it the gradient is taken by central differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .geometry import AtlasManifold, ChartPoint, as_batch, christoffel, embed, metric

FD_STEP = 1e-5


@dataclass(frozen=True)
class PotentialSpec:
    psi_fn: Callable[[ChartPoint], np.ndarray]
    grad_fn: Optional[Callable[[ChartPoint], np.ndarray]] = None
    name: str = "custom"

    def __call__(self, p: ChartPoint) -> np.ndarray:
        return np.asarray(self.psi_fn(p), dtype=float)

    def shifted(self, c: float) -> "PotentialSpec":
        return PotentialSpec(lambda p: self.psi_fn(p) + c, self.grad_fn, f"{self.name}+{c}")

    def scaled(self, c: float) -> "PotentialSpec":
        grad = None if self.grad_fn is None else (lambda p: c * np.asarray(self.grad_fn(p)))
        return PotentialSpec(lambda p: c * np.asarray(self.psi_fn(p)), grad, f"{c}*{self.name}")


def value(pot: PotentialSpec, ids, x) -> np.ndarray:
    return np.asarray(pot.psi_fn(ChartPoint(ids, x)), dtype=float)


def differential(pot: PotentialSpec, ids, x, h: float = FD_STEP) -> np.ndarray:
    """Coordinate partial derivatives by central differences."""
    d = x.shape[-1]
    out = np.empty(x.shape)
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        out[..., i] = (value(pot, ids, x + e) - value(pot, ids, x - e)) / (2 * h)
    return out


def gradient(m: AtlasManifold, pot: PotentialSpec, ids, x) -> np.ndarray:
    """Coordinate components of grad_g Psi."""
    if pot.grad_fn is not None:
        return np.asarray(pot.grad_fn(ChartPoint(ids, x)), dtype=float)
    g = metric(m, ids, x)
    return np.linalg.solve(g, differential(pot, ids, x)[..., None])[..., 0]


def hessian(m: AtlasManifold, pot: PotentialSpec, ids, x, h: float = 1e-4) -> np.ndarray:
    """Covariant Hessian components ``d_ij Psi - G^k_ij d_k Psi``."""
    d = x.shape[-1]
    f0 = value(pot, ids, x)
    hs = np.empty(x.shape + (d,))
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        hs[..., i, i] = (value(pot, ids, x + ei) - 2 * f0 + value(pot, ids, x - ei)) / h ** 2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            mixed = (value(pot, ids, x + ei + ej) - value(pot, ids, x + ei - ej)
                     - value(pot, ids, x - ei + ej) + value(pot, ids, x - ei - ej)) / (4 * h * h)
            hs[..., i, j] = hs[..., j, i] = mixed
    dpsi = differential(pot, ids, x)
    return hs - np.einsum("...kij,...k->...ij", christoffel(m, ids, x), dpsi)


def gradient_at(m: AtlasManifold, pot: PotentialSpec, p: ChartPoint) -> np.ndarray:
    ids, x, single = as_batch(p.chart_id, p.coords)
    out = gradient(m, pot, ids, x)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# registry


def _zero(m, **_):
    return PotentialSpec(lambda p: np.zeros(np.shape(p.coords)[:-1]),
                         lambda p: np.zeros(np.shape(p.coords)), "zero")


def _quadratic(m, k: float = 1.0, offset: float = 0.0):
    def psi(p):
        x = np.asarray(p.coords)
        return offset + 0.5 * k * np.sum(x * x, axis=-1)

    grad = None
    if m.all_flat:
        def grad(p):
            return k * np.asarray(p.coords, dtype=float)

    return PotentialSpec(psi, grad, "quadratic")


def _linear(m, c=(1.0,)):
    c = np.asarray(c, dtype=float)

    def psi(p):
        return np.asarray(p.coords) @ c

    return PotentialSpec(psi, None, "linear")


def _sine(m, a: float = 1.0, axis: int = 0, k: float = 1.0):
    def psi(p):
        return a * np.sin(k * np.asarray(p.coords)[..., axis])

    def grad(p):
        x = np.asarray(p.coords, dtype=float)
        out = np.zeros(x.shape)
        out[..., axis] = a * k * np.cos(k * x[..., axis])
        return out

    return PotentialSpec(psi, grad if m.all_flat else None, "sine")


def _cosine(m, a: float = 1.0, axis: int = 0, k: float = 1.0):
    def psi(p):
        return a * np.cos(k * np.asarray(p.coords)[..., axis])

    def grad(p):
        x = np.asarray(p.coords, dtype=float)
        out = np.zeros(x.shape)
        out[..., axis] = -a * k * np.sin(k * x[..., axis])
        return out

    return PotentialSpec(psi, grad if m.all_flat else None, "cosine")


def _height(m, a: float = 1.0):
    def psi(p):
        return a * embed(m, p)[..., -1]

    grad = None
    if m.name == "sphere2":
        # chart 0 sees the north pole at the origin: grad z = -u there, +u in chart 1
        def grad(p):
            ids, x, _ = as_batch(p.chart_id, p.coords)
            sign = np.where(ids == 0, -a, a)[:, None] * x
            return sign.reshape(np.shape(p.coords))

    return PotentialSpec(psi, grad, "height")


def _confining(m, c: float = 1.0):
    # 1 + c |x|^2 / 2, positive with nonvanishing gradient away from the origin
    return _quadratic(m, k=c, offset=1.0)


POTENTIALS = {
    "zero": _zero,
    "quadratic": _quadratic,
    "linear": _linear,
    "sine": _sine,
    "cosine": _cosine,
    "height": _height,
    "confining": _confining,
}


def potential_by_name(m: AtlasManifold, name: str, **params) -> PotentialSpec:
    try:
        factory = POTENTIALS[name]
    except KeyError:
        raise ValueError(f"unknown potential {name!r}") from None
    return factory(m, **params)
