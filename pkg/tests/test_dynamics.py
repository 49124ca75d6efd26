import csv

import numpy as np
import pytest
from scipy.linalg import expm

from geolangevin.analysis.operators import random_states
from geolangevin.bundle import TangentState, metric_norm
from geolangevin.dynamics import (BLOCK_SIZE, WORKERS_ENV, EnsembleError, FldParams, IntegratorConfig,
                                  LangevinParams, base_path, default_workers, fld_step, langevin_step,
                                  path_length, run_blocks, simulate_ensemble, simulate_trajectory, step_batch,
                                  noise_dim)
from geolangevin.errors import NotUnitState
from geolangevin.geometry import (AtlasManifold, ChartPoint, ChartSpec, embed, geodesic_step, integrate_geodesic,
                                  manifold_by_name)
from geolangevin.measures import BundleMeasureSpec, integrate_mu, sample_mu
from geolangevin.potentials import potential_by_name

import oracles


def _det_step(m, s, model, dt, scheme="strang_baoab_like"):
    """One step with all noise set to zero."""
    ids, x, v = s.batch()
    z = np.zeros((len(ids), noise_dim(model, m.dimension, scheme)))
    out = step_batch(m, ids.copy(), x.copy(), v.copy(), model, dt, z, scheme)
    return out[1], out[2]


class TestParams:
    def test_sigma_derived(self, line):
        p = LangevinParams(2.0, 4.0, potential_by_name(line, "zero"))
        np.testing.assert_allclose(p.sigma, 1.0, rtol=1e-15)

    def test_sigma_mismatch_rejected(self, line):
        with pytest.raises(ValueError, match="sqrt"):
            LangevinParams(1.0, 1.0, potential_by_name(line, "zero"), sigma=1.4)

    def test_sigma_exact_accepted(self, line):
        LangevinParams(1.0, 1.0, potential_by_name(line, "zero"), sigma=np.sqrt(2.0))

    def test_fld_sigma_positive(self, torus_zero):
        with pytest.raises(ValueError):
            FldParams(0.0, torus_zero)

    def test_config_checks(self):
        with pytest.raises(ValueError):
            IntegratorConfig(dt=0.5, t_final=0.1)
        with pytest.raises(ValueError):
            IntegratorConfig(dt=0.1, t_final=1.0, scheme="leapfrog")
        assert IntegratorConfig(dt=0.1, t_final=1.0).n_steps == 10


class TestLangevinStep:
    def test_reduces_to_geodesic_bitwise(self, sphere, rng):
        model = LangevinParams(0.0, 1.0, potential_by_name(sphere, "zero"))
        s = TangentState(0, [0.4, -0.3], [0.2, 0.5])
        out = langevin_step(sphere, s, model, 0.01, rng)
        q, v = geodesic_step(sphere, s.point, s.v, 0.01)
        np.testing.assert_array_equal(out.x, q.coords)
        np.testing.assert_array_equal(out.v, v)

    def test_small_dt_matches_classical_drift(self, line):
        model = LangevinParams(0.7, 2.0, potential_by_name(line, "quadratic"))
        s = TangentState(np.zeros(1, int), [[0.8]], [[-0.3]])
        drift = np.array([-0.3, -0.8 - 0.7 * -0.3])
        errs = []
        for dt in (1e-2, 5e-3, 2.5e-3):
            x, v = _det_step(line, s, model, dt)
            euler = np.array([0.8, -0.3]) + dt * drift
            errs.append(np.abs(np.array([x[0, 0], v[0, 0]]) - euler).max())
        errs = np.array(errs)
        # one-step deviation from the Euler update is O(dt^2)
        np.testing.assert_allclose(errs[:-1] / errs[1:], 4.0, rtol=0.05)

    def test_noise_variance_one_step(self, line):
        model = LangevinParams(1.0, 0.5, potential_by_name(line, "zero"))
        n, dt = 200_000, 1e-3
        init = TangentState(np.zeros(n, int), np.zeros((n, 1)), np.zeros((n, 1)))
        res = run_blocks(line, init, model, dt, 1, seed=3)
        # exact OU variance of v after time dt started at 0
        var = (1 - np.exp(-2 * model.alpha * dt)) / model.beta
        np.testing.assert_allclose(res.v[-1, :, 0].var(), var, rtol=4 * np.sqrt(2 / n))

    def test_single_state_api(self, sphere, rng):
        model = LangevinParams(1.0, 1.0, potential_by_name(sphere, "height"))
        out = langevin_step(sphere, TangentState(0, [0.1, 0.1], [0.3, 0.0]), model, 0.01, rng)
        assert out.x.shape == (2,) and not out.is_batch

    def test_weak_order_of_mean(self, line):
        # the scheme is linear, so noise-free runs give the exact expectation
        model = LangevinParams(1.0, 1.0, potential_by_name(line, "quadratic"))
        exact = oracles.ou_mean(1.0, 0.0, 1.0)
        bias = []
        for dt in (0.2, 0.1, 0.05):
            s = TangentState(np.zeros(1, int), [[1.0]], [[0.0]])
            for _ in range(int(round(1 / dt))):
                x, v = _det_step(line, s, model, dt)
                s = TangentState(np.zeros(1, int), x, v)
            bias.append(np.abs(np.array([s.x[0, 0], s.v[0, 0]]) - exact).max())
        bias = np.array(bias)
        assert np.all(bias[:-1] / bias[1:] > 1.9)

    def test_weak_second_moment(self, line):
        model = LangevinParams(1.0, 1.0, potential_by_name(line, "quadratic"))
        drift = np.array([[0.0, 1.0], [-1.0, -1.0]])
        noise = np.diag([0.0, 2.0])
        # exact covariance at t = 1 from (0, 0) via the Van Loan block exponential
        blk = np.block([[-drift, noise], [np.zeros((2, 2)), drift.T]])
        e = expm(blk)
        cov = e[2:, 2:].T @ e[:2, 2:]
        n = 100_000
        init = TangentState(np.zeros(n, int), np.zeros((n, 1)), np.zeros((n, 1)))
        res = run_blocks(line, init, model, 0.05, 20, seed=4)
        x, v = res.x[-1, :, 0], res.v[-1, :, 0]
        for est, ref in ((x * x, cov[0, 0]), (v * v, cov[1, 1]), (x * v, cov[0, 1])):
            se = est.std() / np.sqrt(n)
            assert abs(est.mean() - ref) < 3 * se + 5e-3


class TestFldStep:
    def test_zero_noise_limit_is_geodesic(self, sphere, rng):
        model = FldParams(1e-300, potential_by_name(sphere, "zero"))
        raw = TangentState(0, [0.3, 0.2], [0.3, 0.1])
        s = TangentState(0, raw.x, raw.v / metric_norm(sphere, raw))
        out = fld_step(sphere, s, model, 0.01, rng)
        q, v = geodesic_step(sphere, s.point, s.v, 0.01)
        np.testing.assert_allclose(out.x, q.coords, atol=1e-14)
        np.testing.assert_allclose(metric_norm(sphere, out), 1.0, atol=1e-15)

    def test_requires_unit_state(self, torus, torus_zero, rng):
        with pytest.raises(NotUnitState):
            fld_step(torus, TangentState(0, [0.0, 0.0], [2.0, 0.0]), FldParams(1.0, torus_zero), 0.01, rng)

    def test_angle_is_brownian(self, plane):
        sigma, n, dt = 0.8, 20_000, 0.01
        model = FldParams(sigma, potential_by_name(plane, "zero"))
        init = TangentState(np.zeros(n, int), np.zeros((n, 2)), np.tile([1.0, 0.0], (n, 1)))
        res = run_blocks(plane, init, model, dt, 100, seed=5, record_steps=range(101))
        theta = np.unwrap(np.arctan2(res.v[:, :, 1], res.v[:, :, 0]), axis=0)[-1]
        var = theta.var()
        se = var * np.sqrt(2 / (n - 1))
        assert abs(var - sigma ** 2) < 3 * se

    @pytest.mark.parametrize("name,kw,pot", [("sphere2", {}, "height"),
                                             ("graph_surface", {"height": "sine_sheet"}, "quadratic"),
                                             ("flat_torus2", {}, "sine")], ids=["sphere", "sine_sheet", "torus"])
    def test_unit_norm_preserved(self, name, kw, pot):
        m = manifold_by_name(name, **kw)
        model = FldParams(1.0, potential_by_name(m, pot))
        init = random_states(m, 200, np.random.default_rng(6), radius=1.0, unit=True)
        res = run_blocks(m, init, model, 0.01, 200, seed=6, record_steps=range(0, 201, 10))
        for k in range(res.x.shape[0]):
            st = TangentState(res.ids[k], res.x[k], res.v[k])
            np.testing.assert_allclose(metric_norm(m, st), 1.0, atol=1e-9)


class TestRunners:
    def test_zero_horizon(self, torus, torus_zero):
        cfg = IntegratorConfig(dt=0.1, t_final=0.0)
        traj = simulate_trajectory(torus, TangentState(0, [1.0, 1.0], [1.0, 0.0]), FldParams(1.0, torus_zero), cfg)
        assert len(traj) == 1

    def test_same_seed_identical(self, sphere):
        model = LangevinParams(1.0, 1.0, potential_by_name(sphere, "height"))
        cfg = IntegratorConfig(dt=0.01, t_final=1.0, seed=9)
        s = TangentState(0, [0.2, 0.1], [0.3, -0.4])
        a = simulate_trajectory(sphere, s, model, cfg)
        b = simulate_trajectory(sphere, s, model, cfg)
        np.testing.assert_array_equal(a.states.x, b.states.x)
        np.testing.assert_array_equal(a.states.v, b.states.v)
        assert np.all(np.diff(a.times) > 0)

    def test_different_seed_differs(self, sphere):
        model = LangevinParams(1.0, 1.0, potential_by_name(sphere, "height"))
        s = TangentState(0, [0.2, 0.1], [0.3, -0.4])
        a = simulate_trajectory(sphere, s, model, IntegratorConfig(dt=0.01, t_final=0.1, seed=1))
        b = simulate_trajectory(sphere, s, model, IntegratorConfig(dt=0.01, t_final=0.1, seed=2))
        assert not np.array_equal(a.states.x, b.states.x)

    def test_single_member_ensemble(self, torus, torus_zero):
        cfg = IntegratorConfig(dt=0.05, t_final=1.0, seed=4)
        s = TangentState(0, [1.0, 1.0], [0.6, 0.8])
        model = FldParams(1.0, torus_zero)
        a = simulate_ensemble(torus, [s], model, cfg)[0]
        b = simulate_trajectory(torus, s, model, cfg)
        np.testing.assert_array_equal(a.states.v, b.states.v)

    def test_worker_count_invariance(self, torus, torus_zero):
        n = BLOCK_SIZE * 2 + 17
        model = FldParams(1.0, torus_zero)
        init = TangentState(np.zeros(n, int), np.ones((n, 2)), np.tile([0.6, 0.8], (n, 1)))
        one = run_blocks(torus, init, model, 0.05, 10, seed=21, workers=1)
        many = run_blocks(torus, init, model, 0.05, 10, seed=21, workers=3)
        np.testing.assert_array_equal(one.x, many.x)
        np.testing.assert_array_equal(one.v, many.v)

    def test_batching_invariance(self, torus, torus_zero):
        model = FldParams(1.0, torus_zero)
        init = TangentState(np.zeros(6, int), np.ones((6, 2)), np.tile([0.6, 0.8], (6, 1)))
        full = run_blocks(torus, init, model, 0.05, 10, seed=2)
        tail = run_blocks(torus, init[3:], model, 0.05, 10, seed=2, first_index=3)
        np.testing.assert_array_equal(full.x[:, 3:], tail.x)

    def test_workers_env(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "3")
        assert default_workers() == 3

    def test_ensemble_errors_collected(self):
        disc = ChartSpec(0, 1, lambda x: np.ones(np.shape(x)[:-1] + (1, 1)),
                         validity_fn=lambda x: np.abs(x[..., 0]) < 1.0, flat=True)
        box = AtlasManifold("unit_interval", 1, (disc,))
        model = LangevinParams(0.0, 1.0, potential_by_name(box, "zero"))
        init = TangentState(np.zeros(2, int), np.zeros((2, 1)), [[5.0], [0.0]])
        with pytest.raises(EnsembleError) as info:
            run_blocks(box, init, model, 0.1, 10, seed=0)
        assert len(info.value.errors) == 1

    def test_sphere_ensemble_budget(self, sphere):
        import time

        model = LangevinParams(1.0, 1.0, potential_by_name(sphere, "height"))
        init = random_states(sphere, 1000, np.random.default_rng(1))
        t0 = time.perf_counter()
        res = run_blocks(sphere, init, model, 0.01, 1000, seed=1)
        assert time.perf_counter() - t0 < 10.0
        assert len(res.events) > 0

    @pytest.mark.slow
    def test_long_sphere_run_stays_on_atlas(self, sphere):
        model = LangevinParams(1.0, 1.0, potential_by_name(sphere, "height"))
        init = TangentState(np.zeros(1, int), [[0.1, 0.2]], [[0.5, 0.5]])
        res = run_blocks(sphere, init, model, 0.01, 100_000, seed=13)
        assert len(res.events) > 10
        np.testing.assert_allclose(np.linalg.norm(embed(sphere, ChartPoint(res.ids[-1], res.x[-1])), axis=-1), 1.0)


class TestPaths:
    def test_constant_path(self, line):
        traj_states = TangentState(np.zeros(3, int), np.ones((3, 1)), np.zeros((3, 1)))
        from geolangevin.dynamics import Trajectory

        p = base_path(Trajectory(np.arange(3.0), traj_states))
        np.testing.assert_array_equal(p.coords, 1.0)

    def test_geodesic_path(self, sphere):
        model = LangevinParams(0.0, 1.0, potential_by_name(sphere, "zero"))
        s = TangentState(0, [0.2, 0.1], [0.3, -0.4])
        traj = simulate_trajectory(sphere, s, model, IntegratorConfig(dt=0.01, t_final=0.5))
        end, _ = integrate_geodesic(sphere, s.point, s.v, 0.5, 0.01)
        path = base_path(traj)
        np.testing.assert_array_equal(path.coords[-1], end.coords)

    def test_unit_speed_arclength(self, torus, torus_zero):
        cfg = IntegratorConfig(dt=0.01, t_final=5.0, seed=3)
        traj = simulate_trajectory(torus, TangentState(0, [1.0, 1.0], [1.0, 0.0]), FldParams(1.0, torus_zero), cfg)
        # chords are shorter than arcs by O(dt) per unit length
        np.testing.assert_allclose(path_length(torus, traj), 5.0, rtol=0.02)
        assert path_length(torus, traj) <= 5.0 + 1e-12

    def test_csv_columns(self, sphere, tmp_path):
        model = LangevinParams(1.0, 1.0, potential_by_name(sphere, "zero"))
        traj = simulate_trajectory(sphere, TangentState(0, [0.2, 0.1], [0.3, -0.4]), model,
                                   IntegratorConfig(dt=0.1, t_final=0.3))
        path = tmp_path / "traj.csv"
        traj.to_csv(path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "chart_id", "x1", "x2", "v1", "v2"]
        assert len(rows) == 5
        np.testing.assert_allclose(float(rows[-1][0]), 0.3)


class TestDistributional:
    def test_switch_threshold_irrelevant(self):
        stats = []
        for thr in (1.2, 1.8):
            m = manifold_by_name("sphere2", switch_threshold=thr)
            model = LangevinParams(1.0, 1.0, potential_by_name(m, "height"))
            n = 4000
            init = TangentState(np.zeros(n, int), np.tile([0.9, 0.3], (n, 1)), np.tile([0.5, -0.2], (n, 1)))
            res = run_blocks(m, init, model, 0.01, 100, seed=17)
            e = embed(m, ChartPoint(res.ids[-1], res.x[-1]))
            obs = np.stack([e[:, 0], e[:, 2], e[:, 1] ** 2])
            stats.append((obs.mean(axis=1), obs.std(axis=1) / np.sqrt(n)))
        (m1, s1), (m2, s2) = stats
        assert np.all(np.abs(m1 - m2) < 3 * np.hypot(s1, s2))

    @pytest.mark.parametrize("case", ["torus_langevin", "sphere_fld"])
    def test_invariant_measure_preserved(self, case):
        if case == "torus_langevin":
            m = manifold_by_name("flat_torus2")
            model = LangevinParams(1.0, 2.0, potential_by_name(m, "sine"))
            obs = [lambda s: np.cos(s.x[..., 0]), lambda s: np.sin(s.x[..., 0]), lambda s: s.v[..., 0] ** 2,
                   lambda s: s.v[..., 0] * np.cos(s.x[..., 0]), lambda s: np.sin(s.x[..., 0] + s.x[..., 1])]
        else:
            m = manifold_by_name("sphere2")
            model = FldParams(1.0, potential_by_name(m, "height"))
            obs = [lambda s: embed(m, s.point)[..., 2], lambda s: embed(m, s.point)[..., 0],
                   lambda s: embed(m, s.point)[..., 2] ** 2, lambda s: np.tanh(s.v[..., 0]),
                   lambda s: embed(m, s.point)[..., 1] * embed(m, s.point)[..., 2]]
        spec = BundleMeasureSpec.for_model(model)
        n = 20_000
        init = sample_mu(m, spec, n, np.random.default_rng(31))
        res = run_blocks(m, init, model, 0.05, 4, seed=31)
        after = TangentState(res.ids[-1], res.x[-1], res.v[-1])
        for f in obs:
            a, b = f(init), f(after)
            diff = b - a
            assert abs(diff.mean()) < 3 * diff.std() / np.sqrt(n) + 1e-12
            ref, _ = integrate_mu(m, spec, f)
            assert abs(b.mean() - ref) < 3 * b.std() / np.sqrt(n) + 1e-12
