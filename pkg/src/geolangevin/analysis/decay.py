"""Stationary autocovariance decay, exponential rate fits and ergodic averages.

All Monte Carlo estimates start from exact samples of the invariant
measure and use batch means (contiguous trajectory batches) for standard
errors.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..bundle import TangentState
from ..dynamics import IntegratorConfig, run_blocks
from ..errors import InsufficientSignal
from ..geometry import AtlasManifold
from ..measures import DEFAULT_QUAD, BundleMeasureSpec, QuadratureSpec, integrate_mu, sample_mu
from .constants import RateBundle

N_BATCHES = 20


@dataclass
class DecayCurve:
    times: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    n_traj: int
    variance: float = float("nan")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "value", "stderr"])
            for t, v, e in zip(self.times, self.values, self.stderr):
                w.writerow([repr(float(t)), repr(float(v)), repr(float(e))])


@dataclass
class RateFit:
    kappa2_hat: float
    log_prefactor: float
    r_squared: float
    fit_window: np.ndarray
    slope_stderr: float = float("nan")

    def kappa1_hat(self, variance: float) -> float:
        """Prefactor of ``C(t) <= kappa1 e^{-kappa2 t} Var``, at least 1."""
        return max(1.0, float(np.exp(self.log_prefactor) / variance))


def batch_means(samples: np.ndarray, n_batches: int = N_BATCHES):
    """Mean over the last axis and its batch-means standard error."""
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[-1]
    nb = min(n_batches, n)
    edges = np.linspace(0, n, nb + 1).astype(int)
    means = np.stack([samples[..., a:b].mean(axis=-1) for a, b in zip(edges[:-1], edges[1:])], axis=-1)
    return samples.mean(axis=-1), means.std(axis=-1, ddof=1) / np.sqrt(nb)


def _init_rng(seed: int):
    # separate from the per-trajectory streams default_rng([seed, i])
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))


def _mean_var(m, spec, obs, quad, fallback_samples):
    try:
        mean, _ = integrate_mu(m, spec, obs, quad)
        second, _ = integrate_mu(m, spec, lambda s: np.asarray(obs(s)) ** 2, quad)
        return mean, second - mean * mean
    except Exception:
        vals = np.asarray(obs(fallback_samples), dtype=float)
        return float(vals.mean()), float(vals.var())


def semigroup_decay(m: AtlasManifold, spec: BundleMeasureSpec, model, g_obs: Callable[[TangentState], np.ndarray],
                    ts: Sequence[float], n_traj: int, cfg: IntegratorConfig, quad: QuadratureSpec = DEFAULT_QUAD,
                    workers: Optional[int] = None, n_batches: int = N_BATCHES) -> DecayCurve:
    """Estimate ``C(t) = E[g~(eta_0) g~(eta_t)]`` with ``eta_0 ~ mu``."""
    ts = np.asarray(ts, dtype=float)
    if np.any(np.diff(ts) <= 0) or np.any(ts < 0):
        raise ValueError("ts must be increasing and nonnegative")
    if n_traj < 1000:
        raise ValueError("n_traj must be at least 1000")
    init = sample_mu(m, spec, n_traj, _init_rng(cfg.seed))
    mean, var = _mean_var(m, spec, g_obs, quad, init)
    steps = np.rint(ts / cfg.dt).astype(int)
    res = run_blocks(m, init, model, cfg.dt, int(steps.max()), cfg.seed, cfg.scheme, steps, workers=workers)
    g0 = np.asarray(g_obs(init), dtype=float) - mean
    prods = np.empty((len(steps), n_traj))
    lookup = {int(s): k for k, s in enumerate(res.steps)}
    for j, s in enumerate(steps):
        k = lookup[int(s)]
        st = TangentState(res.ids[k], res.x[k], res.v[k])
        prods[j] = g0 * (np.asarray(g_obs(st), dtype=float) - mean)
    vals, err = batch_means(prods, n_batches)
    return DecayCurve(ts, vals, err, n_traj, float(var))


def fit_exponential_rate(curve: DecayCurve, min_points: int = 4, snr: float = 3.0) -> RateFit:
    """Weighted least squares of ``log|C(t)|`` against ``t``.

    Only points with ``|C(t)| > snr * stderr`` enter; weights are
    ``(C / stderr)^2``, the inverse variance of ``log|C|``.
    """
    vals = np.abs(np.asarray(curve.values, dtype=float))
    err = np.asarray(curve.stderr, dtype=float)
    use = vals > snr * err
    if use.sum() < min_points:
        raise InsufficientSignal(f"only {int(use.sum())} points above {snr} standard errors")
    t = np.asarray(curve.times, dtype=float)[use]
    y = np.log(vals[use])
    e = err[use]
    w = np.where(e > 0, (vals[use] / np.where(e > 0, e, 1.0)) ** 2, 1.0)
    if np.all(e == 0):
        w = np.ones_like(y)
    X = np.stack([np.ones_like(t), t], axis=1)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    fitted = X @ coef
    ybar = np.sum(w * y) / np.sum(w)
    ss_tot = np.sum(w * (y - ybar) ** 2)
    ss_res = np.sum(w * (y - fitted) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    dof = max(len(t) - 2, 1)
    cov = np.linalg.inv((X * w[:, None]).T @ X) * (ss_res / dof)
    slope_se = float(np.sqrt(max(cov[1, 1], 0.0)))
    kappa = -float(coef[1])
    if not kappa > max(2.0 * slope_se, 1e-12):
        raise InsufficientSignal(f"no resolvable decay: slope {-kappa:.3g} +- {slope_se:.2g}")
    return RateFit(kappa, float(coef[0]), float(r2), t, slope_se)


def time_average_bound(t, rates: RateBundle, norm: float) -> float:
    """``(2 / sqrt t) sqrt(2 kappa1 / kappa2 (1 - e^{-t kappa2})) ||f - E f||``."""
    k1, k2 = rates.kappa1, rates.kappa2
    return float(2.0 / np.sqrt(t) * np.sqrt(2.0 * k1 / k2 * (1.0 - np.exp(-t * k2))) * norm)


@dataclass
class TimeAverageReport:
    times: np.ndarray
    lhs: np.ndarray
    lhs_stderr: np.ndarray
    rhs: np.ndarray
    violations: np.ndarray
    loglog_slope: float
    rates: RateBundle
    mean: float
    norm: float
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not bool(np.any(self.violations))

    def as_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "lhs": self.lhs.tolist(),
            "lhs_stderr": self.lhs_stderr.tolist(),
            "rhs": self.rhs.tolist(),
            "violations": self.violations.tolist(),
            "loglog_slope": self.loglog_slope,
            "kappa1": self.rates.kappa1,
            "kappa2": self.rates.kappa2,
            "mean": self.mean,
            "norm": self.norm,
            **self.extra,
        }


def time_average_check(m: AtlasManifold, spec: BundleMeasureSpec, model, f_obs: Callable[[TangentState], np.ndarray],
                       t_grid: Sequence[float], n_traj: int, rates: RateBundle, cfg: IntegratorConfig,
                       quad: QuadratureSpec = DEFAULT_QUAD, workers: Optional[int] = None,
                       n_batches: int = N_BATCHES, n_sigma: float = 2.0) -> TimeAverageReport:
    """L2 error of ergodic averages against the hypocoercive bound.

    ``LHS(t) = sqrt(E[((1/t) int_0^t f(eta_s) ds - E_mu f)^2])`` from
    trapezoidal path integrals; a time counts as a violation when
    ``LHS - n_sigma * stderr > RHS`` beyond round-off.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    init = sample_mu(m, spec, n_traj, _init_rng(cfg.seed))
    mean, var = _mean_var(m, spec, f_obs, quad, init)
    norm = float(np.sqrt(max(var, 0.0)))
    steps = np.rint(t_grid / cfg.dt).astype(int)
    res = run_blocks(m, init, model, cfg.dt, int(steps.max()), cfg.seed, cfg.scheme, record_steps=[],
                     integrand=f_obs, integral_steps=steps, workers=workers)
    order = {int(s): k for k, s in enumerate(sorted(set(int(s) for s in steps)))}
    sq = np.stack([(res.integrals[order[int(s)]] / t - mean) ** 2 for s, t in zip(steps, t_grid)])
    m2, se2 = batch_means(sq, n_batches)
    lhs = np.sqrt(m2)
    lhs_se = se2 / (2.0 * np.maximum(lhs, 1e-300))
    rhs = np.array([time_average_bound(t, rates, norm) for t in t_grid])
    # floor for round-off in the path integral, which matters when f is nearly constant
    viol = lhs - n_sigma * lhs_se > rhs + 1e-12 * max(1.0, abs(float(mean)))
    slope = float(np.polyfit(np.log(t_grid), np.log(np.maximum(lhs, 1e-300)), 1)[0]) if len(t_grid) > 1 else float("nan")
    return TimeAverageReport(t_grid, lhs, lhs_se, rhs, viol, slope, rates, float(mean), norm)
