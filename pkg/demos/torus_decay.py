"""Autocovariance decay of fibre lay-down on the flat torus.

Estimates the stationary autocovariance of cos(x1) by Monte Carlo, fits an
exponential rate, and compares with the rate guaranteed by the
hypocoercivity constants.  The guaranteed rate is a lower bound and is
expected to sit well below the fitted one.

    python3 demos/torus_decay.py
"""

import numpy as np

from geolangevin.analysis import (DmsConstants, c1_constant, dms_rate, estimate_c2, estimate_poincare,
                                  fit_exponential_rate, macroscopic_constant, microscopic_constant, semigroup_decay)
from geolangevin.dynamics import FldParams, IntegratorConfig
from geolangevin.geometry import manifold_by_name
from geolangevin.measures import BundleMeasureSpec
from geolangevin.potentials import potential_by_name

m = manifold_by_name("flat_torus2")
model = FldParams(sigma=2.0, potential=potential_by_name(m, "zero"))
spec = BundleMeasureSpec.for_model(model)

ts = np.linspace(0.0, 6.0, 13)
curve = semigroup_decay(m, spec, model, lambda s: np.cos(s.x[..., 0]), ts, 4000,
                        IntegratorConfig(dt=0.01, t_final=6.0, seed=7))
for t, v, e in zip(curve.times, curve.values, curve.stderr):
    print(f"t={t:4.1f}  C(t)={v:+.4f} +- {e:.4f}")
fit = fit_exponential_rate(curve)
print(f"fitted decay rate {fit.kappa2_hat:.3f} (r^2 {fit.r_squared:.3f})")

lam = estimate_poincare(m, spec.base_potential, grid_n=64)
c2 = estimate_c2(m, spec, model, grid_n=8)
k = DmsConstants(microscopic_constant(model, 2), macroscopic_constant(lam, model, 2), c1_constant(model, 2), c2)
rate = dms_rate(k)
print(f"Poincare {lam:.4f}, c2 witness {c2:.3f}")
print(f"guaranteed rate {rate.kappa2:.4f} with prefactor {rate.kappa1:.3f}")
