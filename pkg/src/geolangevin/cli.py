"""Batch experiment runner.

Usage::

    geolangevin run CONFIG.json [--seed N] [--out DIR]
    geolangevin validate CONFIG.json

The worker count for ensembles comes from ``GEOLANGEVIN_WORKERS``.  Exit
codes: 0 when every check passes, 1 when a check fails, 2 for invalid
configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .bundle import TangentState
from .dynamics import (FldParams, IntegratorConfig, LangevinParams, base_path, default_workers, simulate_ensemble,
                       run_blocks)
from .errors import CheckFailure, ConfigError, GeoLangevinError
from .geometry import MANIFOLD_NAMES, AtlasManifold, ChartPoint, embed, manifold_by_name
from .measures import BundleMeasureSpec, QuadratureSpec, integrate_mu, sample_mu
from .potentials import POTENTIALS, potential_by_name

EXPERIMENTS = ("simulate", "stationary_test", "decay_fit", "time_average", "geometry_check", "operator_check",
               "rate_constants", "fld_layout")

_NAMED = {
    "type": "object",
    "properties": {"name": {"type": "string"}, "params": {"type": "object"}},
    "required": ["name"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "manifold": _NAMED,
        "model": {
            "type": "object",
            "properties": {
                "langevin": {
                    "type": "object",
                    "properties": {
                        "alpha": {"type": "number", "minimum": 0},
                        "beta": {"type": "number", "exclusiveMinimum": 0},
                        "sigma": {"type": "number"},
                        "potential": _NAMED,
                    },
                    "required": ["alpha", "beta"],
                    "additionalProperties": False,
                },
                "fld": {
                    "type": "object",
                    "properties": {"sigma": {"type": "number", "exclusiveMinimum": 0}, "potential": _NAMED},
                    "required": ["sigma"],
                    "additionalProperties": False,
                },
            },
            "minProperties": 1,
            "maxProperties": 1,
            "additionalProperties": False,
        },
        "integrator": {
            "type": "object",
            "properties": {
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "t_final": {"type": "number", "minimum": 0},
                "record_stride": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "scheme": {"enum": ["strang_baoab_like", "euler_heun"]},
            },
            "required": ["dt", "t_final"],
            "additionalProperties": False,
        },
        "experiment": {"enum": list(EXPERIMENTS)},
        "observables": {"type": "array", "items": _NAMED},
        "output_dir": {"type": "string"},
        "options": {"type": "object"},
    },
    "required": ["manifold", "model", "experiment"],
    "additionalProperties": False,
}


# ---------------------------------------------------------------------------
# observables


def _obs_cos(m, axis=0, k=1.0):
    return lambda s: np.cos(k * s.x[..., axis])


def _obs_sin(m, axis=0, k=1.0):
    return lambda s: np.sin(k * s.x[..., axis])


def _obs_embed(m, axis=0):
    return lambda s: embed(m, ChartPoint(s.chart_id, s.x))[..., axis]


def _obs_velocity(m, axis=0):
    return lambda s: s.v[..., axis]


def _obs_speed2(m):
    from .geometry import inner, metric

    return lambda s: inner(metric(m, np.asarray(s.chart_id), s.x), s.v, s.v)


def _obs_one(m):
    return lambda s: np.ones(s.x.shape[:-1])


OBSERVABLES = {
    "cos": _obs_cos,
    "sin": _obs_sin,
    "embed": _obs_embed,
    "velocity": _obs_velocity,
    "speed2": _obs_speed2,
    "one": _obs_one,
}


def observable_by_name(m: AtlasManifold, name: str, **params) -> Callable[[TangentState], np.ndarray]:
    try:
        return OBSERVABLES[name](m, **params)
    except KeyError:
        raise ValueError(f"unknown observable {name!r}") from None


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    manifold: AtlasManifold
    model: object
    integrator: IntegratorConfig
    experiment: str
    observables: list
    output_dir: Path
    options: dict
    raw: dict


def validate_config(raw) -> list:
    """Schema, registry and parameter diagnostics; empty when valid."""
    import jsonschema

    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    diags = [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}"
             for e in sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path)))]
    if diags:
        return diags
    man = raw["manifold"]
    if man["name"] not in MANIFOLD_NAMES:
        diags.append(f"manifold: unknown manifold {man['name']!r}")
        return diags
    try:
        m = manifold_by_name(man["name"], **man.get("params", {}))
    except (TypeError, ValueError) as exc:
        diags.append(f"manifold: {exc}")
        return diags
    (kind, block), = raw["model"].items()
    pot = block.get("potential", {"name": "zero"})
    if pot["name"] not in POTENTIALS:
        diags.append(f"model/{kind}/potential: unknown potential {pot['name']!r}")
    else:
        try:
            potential_by_name(m, pot["name"], **pot.get("params", {}))
        except TypeError as exc:
            diags.append(f"model/{kind}/potential: {exc}")
    if kind == "langevin" and "sigma" in block:
        expected = float(np.sqrt(2.0 * block["alpha"] / block["beta"]))
        if abs(block["sigma"] - expected) >= 1e-12:
            diags.append(f"model/langevin/sigma: must equal sqrt(2 alpha / beta) = {expected!r}, got {block['sigma']!r}")
    for i, ob in enumerate(raw.get("observables", [])):
        if ob["name"] not in OBSERVABLES:
            diags.append(f"observables/{i}: unknown observable {ob['name']!r}")
    integ = raw.get("integrator")
    if integ is not None and integ["t_final"] > 0 and integ["dt"] > integ["t_final"]:
        diags.append("integrator: dt must not exceed t_final")
    if raw["experiment"] == "fld_layout" and kind != "fld":
        diags.append("experiment: fld_layout needs an fld model")
    return diags


def load_config(path, seed: Optional[int] = None, out: Optional[str] = None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    diags = validate_config(raw)
    if diags:
        raise ConfigError("; ".join(diags))
    man = raw["manifold"]
    m = manifold_by_name(man["name"], **man.get("params", {}))
    (kind, block), = raw["model"].items()
    pot_cfg = block.get("potential", {"name": "zero"})
    pot = potential_by_name(m, pot_cfg["name"], **pot_cfg.get("params", {}))
    if kind == "langevin":
        model = LangevinParams(block["alpha"], block["beta"], pot, block.get("sigma"))
    else:
        model = FldParams(block["sigma"], pot)
    integ = dict(raw.get("integrator", {"dt": 0.01, "t_final": 1.0}))
    if seed is not None:
        integ["seed"] = seed
    try:
        cfg = IntegratorConfig(**integ)
    except ValueError as exc:
        raise ConfigError(f"integrator: {exc}") from None
    obs = [(o["name"], observable_by_name(m, o["name"], **o.get("params", {})))
           for o in raw.get("observables", [{"name": "cos", "params": {"axis": 0}}])]
    outdir = Path(out if out is not None else raw.get("output_dir", "out"))
    return ExperimentConfig(m, model, cfg, raw["experiment"], obs, outdir, raw.get("options", {}), raw)


# ---------------------------------------------------------------------------
# experiments; each returns (checks, payload) and writes its own files


def _spec(ec: ExperimentConfig) -> BundleMeasureSpec:
    box = ec.options.get("base_box")
    return BundleMeasureSpec.for_model(ec.model, base_box=tuple(map(tuple, box)) if box else None)


def _initial_states(ec: ExperimentConfig, n: int) -> TangentState:
    init = ec.options.get("init", "mu")
    if init == "mu":
        rng = np.random.default_rng(np.random.SeedSequence(ec.integrator.seed, spawn_key=(1,)))
        return sample_mu(ec.manifold, _spec(ec), n, rng)
    ids = np.full(n, int(init.get("chart_id", 0)))
    x = np.tile(np.asarray(init["x"], dtype=float), (n, 1))
    v = np.tile(np.asarray(init["v"], dtype=float), (n, 1))
    return TangentState(ids, x, v)


def _exp_simulate(ec: ExperimentConfig):
    from .analysis.reports import CheckResult

    n = int(ec.options.get("n_traj", 1))
    trajs = simulate_ensemble(ec.manifold, _initial_states(ec, n), ec.model, ec.integrator)
    for i, tr in enumerate(trajs):
        tr.to_csv(ec.output_dir / f"trajectory_{i:04d}.csv")
    checks = []
    if isinstance(ec.model, FldParams):
        from .bundle import metric_norm

        dev = max(float(np.max(np.abs(metric_norm(ec.manifold, tr.states) - 1.0))) for tr in trajs)
        checks.append(CheckResult.below("unit_speed_deviation", dev, 1e-9))
    return checks, {"n_traj": n, "switch_events": sum(len(t.chart_switch_events) for t in trajs)}


def _exp_stationary(ec: ExperimentConfig):
    from .analysis.reports import CheckResult

    n = int(ec.options.get("n_traj", 10000))
    spec = _spec(ec)
    init = _initial_states(ec, n)
    res = run_blocks(ec.manifold, init, ec.model, ec.integrator.dt, ec.integrator.n_steps, ec.integrator.seed,
                     ec.integrator.scheme)
    final = TangentState(res.ids[-1], res.x[-1], res.v[-1])
    checks, rows = [], []
    for name, f in ec.observables:
        target, _ = integrate_mu(ec.manifold, spec, f, QuadratureSpec())
        vals = np.asarray(f(final), dtype=float)
        se = float(vals.std(ddof=1) / np.sqrt(n))
        z = abs(float(vals.mean()) - target) / max(se, 1e-300)
        checks.append(CheckResult.below(f"stationary_{name}_zscore", z, 3.0))
        rows.append({"observable": name, "mc_mean": float(vals.mean()), "stderr": se, "mu_mean": target})
    return checks, {"observables": rows}


def _decay(ec: ExperimentConfig):
    from .analysis import fit_exponential_rate, semigroup_decay

    ts = ec.options.get("ts", [0.5, 1, 2, 4, 8])
    n = int(ec.options.get("n_traj", 10000))
    name, f = ec.observables[0]
    curve = semigroup_decay(ec.manifold, _spec(ec), ec.model, f, ts, n, ec.integrator)
    curve.to_csv(ec.output_dir / "decay.csv")
    fit = fit_exponential_rate(curve)
    return curve, fit


def _exp_decay_fit(ec: ExperimentConfig):
    from .analysis.reports import CheckResult

    curve, fit = _decay(ec)
    checks = [CheckResult.above("kappa2_hat", fit.kappa2_hat, 0.0), CheckResult.above("r_squared", fit.r_squared, 0.9)]
    return checks, {"kappa2_hat": fit.kappa2_hat, "log_prefactor": fit.log_prefactor, "r_squared": fit.r_squared,
                    "kappa1_hat": fit.kappa1_hat(curve.variance), "fit_window": fit.fit_window}


def _exp_time_average(ec: ExperimentConfig):
    from .analysis import RateBundle, time_average_check
    from .analysis.reports import CheckResult, write_json

    if "kappa1" in ec.options and "kappa2" in ec.options:
        rates = RateBundle(float(ec.options["kappa1"]), float(ec.options["kappa2"]), float("nan"))
    else:
        curve, fit = _decay(ec)
        rates = RateBundle(fit.kappa1_hat(curve.variance), fit.kappa2_hat, float("nan"))
    name, f = ec.observables[0]
    rep = time_average_check(ec.manifold, _spec(ec), ec.model, f, ec.options.get("t_grid", [4, 16, 64]),
                             int(ec.options.get("n_traj", 10000)), rates, ec.integrator)
    write_json(ec.output_dir / "time_average.json", rep.as_dict())
    checks = [CheckResult.below("bound_violations", float(np.sum(rep.violations)), 0.5)]
    lo, hi = ec.options.get("slope_window", [-0.6, -0.4])
    checks.append(CheckResult("loglog_slope", rep.loglog_slope, float(hi), bool(lo <= rep.loglog_slope <= hi), "in"))
    return checks, rep.as_dict()


def _exp_geometry(ec: ExperimentConfig):
    from .analysis.operators import eigenrelation_residual, great_circle_error, liouville_residual
    from .analysis.reports import CheckResult

    m = ec.manifold
    n = int(ec.options.get("n_states", 1000))
    checks = [CheckResult.below("liouville_residual", liouville_residual(m, n, ec.integrator.seed), 1e-5)]
    if m.dimension >= 2:
        checks.append(CheckResult.below("eigenrelation_residual",
                                        eigenrelation_residual(m, n, ec.integrator.seed), 1e-3))
    if m.name == "sphere2":
        checks.append(CheckResult.below("great_circle_error", great_circle_error(m), 1e-6))
    return checks, {}


def _exp_operator(ec: ExperimentConfig):
    from .analysis import apply_generator_fd, check_ibp, check_pa2p, check_pap_zero
    from .analysis.operators import random_states
    from .analysis.reports import CheckResult

    m, spec, model = ec.manifold, _spec(ec), ec.model
    rng = np.random.default_rng(ec.integrator.seed)
    pts = random_states(m, int(ec.options.get("n_points", 10)), rng).point
    f0 = lambda p: np.cos(np.asarray(p.coords)[..., -1])
    checks = [
        CheckResult.below("pap_zero", float(np.max(check_pap_zero(m, spec, f0, lambda s: s.v[..., 0] ** 2, pts))), 1e-8),
        CheckResult.below("pa2p_relative_error", float(np.max(check_pa2p(m, spec, model, f0, pts)[2])), 1e-3),
    ]
    if m.compact:
        g0 = lambda p: np.sin(np.asarray(p.coords)[..., 0] + np.asarray(p.coords)[..., -1])
        checks.append(CheckResult.below("ibp_residual", check_ibp(m, spec, f0, g0, 64), 1e-6))

        def lf(s):
            return apply_generator_fd(m, model, lambda st: np.cos(st.x[..., 0]) * st.v[..., -1] ** 2, s)

        val, err = integrate_mu(m, spec, lf, QuadratureSpec(base_n=32, order=8))
        checks.append(CheckResult.below("mean_generator", abs(val), 1e-5))
    return checks, {}


def _exp_rates(ec: ExperimentConfig):
    from .analysis import (DmsConstants, c1_constant, dms_rate, estimate_c2, estimate_poincare,
                           macroscopic_constant, microscopic_constant)
    from .analysis.reports import CheckResult

    m, model = ec.manifold, ec.model
    d = m.dimension
    spec = _spec(ec)
    lam = ec.options.get("poincare")
    if lam is None:
        lam = estimate_poincare(m, spec.base_potential, int(ec.options.get("grid_n", 64)))
    c2 = ec.options.get("c2")
    c2_source = "user"
    if c2 is None:
        c2 = estimate_c2(m, spec, model, grid_n=int(ec.options.get("c2_grid_n", 12)))
        c2_source = "empirical witness (non-rigorous)"
    lm = microscopic_constant(model, d)
    lM = macroscopic_constant(lam, model, d)
    c1 = c1_constant(model, d)
    rates = dms_rate(DmsConstants(lm, lM, c1, c2))
    payload = {"lambda_m": lm, "lambda_M": lM, "c1": c1, "c2": c2, "c2_source": c2_source, "poincare": lam,
               "kappa1": rates.kappa1, "kappa2": rates.kappa2, "epsilon": rates.epsilon}
    return [CheckResult.above("kappa2", rates.kappa2, 0.0)], payload


def _exp_layout(ec: ExperimentConfig):
    import csv

    from .analysis.reports import CheckResult

    init = _initial_states(ec, 1)
    tr = simulate_ensemble(ec.manifold, init, ec.model, ec.integrator, workers=1)[0]
    p = base_path(tr)
    e = embed(ec.manifold, p)
    with open(ec.output_dir / "laydown.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        d, k = np.shape(p.coords)[-1], e.shape[-1]
        w.writerow(["t", "chart_id"] + [f"x{i + 1}" for i in range(d)] + [f"e{i + 1}" for i in range(k)])
        for j in range(len(tr.times)):
            w.writerow([repr(float(tr.times[j])), int(p.chart_id[j])] + [repr(float(a)) for a in p.coords[j]]
                       + [repr(float(a)) for a in e[j]])
    from .bundle import metric_norm

    dev = float(np.max(np.abs(metric_norm(ec.manifold, tr.states) - 1.0)))
    return [CheckResult.below("unit_speed_deviation", dev, 1e-9)], {"n_points": len(tr.times)}


RUNNERS = {
    "simulate": _exp_simulate,
    "stationary_test": _exp_stationary,
    "decay_fit": _exp_decay_fit,
    "time_average": _exp_time_average,
    "geometry_check": _exp_geometry,
    "operator_check": _exp_operator,
    "rate_constants": _exp_rates,
    "fld_layout": _exp_layout,
}


def run_experiment(ec: ExperimentConfig) -> dict:
    """Run one configured experiment and write ``results.json`` and ``manifest.json``."""
    from .analysis.reports import dumps, write_json

    ec.output_dir.mkdir(parents=True, exist_ok=True)
    start = time.time()
    checks, payload = RUNNERS[ec.experiment](ec)
    wall = time.time() - start
    results = {"experiment": ec.experiment, "seed": ec.integrator.seed, "checks": [c.as_dict() for c in checks],
               "all_pass": all(c.passed for c in checks), "payload": payload}
    write_json(ec.output_dir / "results.json", results)
    manifest = {
        "config_hash": hashlib.sha256(json.dumps(ec.raw, sort_keys=True).encode()).hexdigest(),
        "seed": ec.integrator.seed,
        "versions": {"geolangevin": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "workers": default_workers(),
        "wall_time_s": wall,
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(start)),
        "results_sha256": hashlib.sha256(dumps(results).encode()).hexdigest(),
        "checks": results["checks"],
    }
    write_json(ec.output_dir / "manifest.json", manifest)
    if not results["all_pass"]:
        failed = [c.name for c in checks if not c.passed]
        raise CheckFailure(f"failed checks: {', '.join(failed)}")
    return results


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geolangevin", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None, help="override integrator.seed")
    run.add_argument("--out", default=None, help="override output_dir")
    val = sub.add_parser("validate", help="list configuration problems without running")
    val.add_argument("config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read {args.config}: {exc}")
            return 2
        diags = validate_config(raw)
        for d in diags:
            print(f"error: {d}")
        return 2 if diags else 0
    try:
        ec = load_config(args.config, args.seed, args.out)
        res = run_experiment(ec)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CheckFailure as exc:
        print(f"check failure: {exc}", file=sys.stderr)
        return 1
    except GeoLangevinError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for c in res["checks"]:
        print(f"{'PASS' if c['pass'] else 'FAIL'} {c['name']} = {c['value']:.6g} ({c['comparison']} {c['tolerance']:g})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
