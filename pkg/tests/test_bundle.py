import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geolangevin.analysis.operators import random_states
from geolangevin.bundle import (DoubleTangentComponents, TangentState, apply_field_to_function, canonical_field,
                                connector_apply, horizontal_lift, lie_bracket_fd, metric_norm, nonlinear_connection,
                                projection_apply, sasaki_divergence_fd, sasaki_inner, spherical_gradient_fd,
                                spherical_laplacian_fd, spray_at, tangential_lift, unit_fibre_normalize,
                                vertical_lift)
from geolangevin.errors import NotUnitState
from geolangevin.geometry import manifold_by_name, metric

MANIFOLDS = [("euclidean", {"d": 2}), ("euclidean", {"d": 3}), ("sphere2", {}), ("flat_torus2", {}),
             ("graph_surface", {"height": "paraboloid"}), ("graph_surface", {"height": "sine_sheet"})]
MANIFOLD_IDS = ["plane", "space", "sphere", "torus", "paraboloid", "sine_sheet"]


def _metric(m, s):
    ids, x, _ = s.batch()
    g = metric(m, ids, x)
    return g if s.is_batch else g[0]


def _g_inner(g, a, b):
    return np.einsum("...i,...ij,...j->...", a, g, b)


def base_function(s):
    """f0(x) = sin(x1) cos(2 x2) + x1 x2 / 3, pulled back to the bundle."""
    x = s.x
    return np.sin(x[..., 0]) * np.cos(2 * x[..., 1]) + x[..., 0] * x[..., 1] / 3


def base_function_grad(x):
    return np.stack([np.cos(x[..., 0]) * np.cos(2 * x[..., 1]) + x[..., 1] / 3,
                     -2 * np.sin(x[..., 0]) * np.sin(2 * x[..., 1]) + x[..., 0] / 3], axis=-1)


class TestLifts:
    def test_vertical_lift_of_zero(self, sphere):
        s = TangentState(0, [0.3, 0.1], [0.5, -0.2])
        a = vertical_lift(sphere, s, np.zeros(2))
        np.testing.assert_array_equal(a.as_vector(), 0.0)

    def test_vertical_lift_of_unit(self, sphere):
        s = TangentState(0, [0.3, 0.1], [0.5, -0.2])
        a = vertical_lift(sphere, s, [0.0, 1.0])
        np.testing.assert_array_equal(a.base, 0.0)
        np.testing.assert_array_equal(a.fibre, [0.0, 1.0])

    def test_canonical_field(self, sphere):
        s = TangentState(0, [0.3, 0.1], [0.5, -0.2])
        np.testing.assert_array_equal(canonical_field(sphere, s).fibre, s.v)

    def test_horizontal_lift_flat(self, plane):
        s = TangentState(0, [0.3, 0.1], [0.5, -0.2])
        a = horizontal_lift(plane, s, [1.0, 2.0])
        np.testing.assert_array_equal(a.base, [1.0, 2.0])
        np.testing.assert_allclose(a.fibre, 0.0)

    def test_horizontal_lift_projects_to_w(self, sphere):
        s = TangentState(1, [-0.4, 0.9], [0.5, -0.2])
        w = np.array([0.7, 0.3])
        np.testing.assert_array_equal(projection_apply(sphere, s, horizontal_lift(sphere, s, w)), w)

    @pytest.mark.parametrize("name,kw", MANIFOLDS, ids=MANIFOLD_IDS)
    def test_connector_kills_horizontal(self, name, kw, rng):
        m = manifold_by_name(name, **kw)
        s = random_states(m, 200, rng)
        w = rng.normal(size=s.v.shape)
        np.testing.assert_allclose(connector_apply(m, s, horizontal_lift(m, s, w)), 0.0, atol=1e-12)
        np.testing.assert_allclose(connector_apply(m, s, vertical_lift(m, s, w)), w, atol=1e-14)

    @pytest.mark.parametrize("name,kw", MANIFOLDS, ids=MANIFOLD_IDS)
    def test_spray_is_horizontal(self, name, kw, rng):
        m = manifold_by_name(name, **kw)
        s = random_states(m, 200, rng)
        np.testing.assert_allclose(connector_apply(m, s, spray_at(m, s)), 0.0, atol=1e-12)
        spray = spray_at(m, s)
        hv = horizontal_lift(m, s, s.v)
        np.testing.assert_allclose(spray.as_vector(), hv.as_vector(), atol=1e-12)

    def test_spray_by_index_contraction(self, sphere):
        s = TangentState(0, [0.3, -0.1], [0.4, 0.9])
        u = s.x
        gam = np.zeros((2, 2, 2))
        for k in range(2):
            for i in range(2):
                for j in range(2):
                    gam[k, i, j] = -2 * ((k == i) * u[j] + (k == j) * u[i] - (i == j) * u[k]) / (1 + u @ u)
        expect = -np.einsum("kij,i,j->k", gam, s.v, s.v)
        np.testing.assert_allclose(spray_at(sphere, s).fibre, expect, atol=1e-14)

    @pytest.mark.parametrize("name,kw", MANIFOLDS, ids=MANIFOLD_IDS)
    def test_split_reconstruction(self, name, kw, rng):
        m = manifold_by_name(name, **kw)
        s = random_states(m, 300, rng)
        a = DoubleTangentComponents(rng.normal(size=s.v.shape), rng.normal(size=s.v.shape))
        rebuilt = vertical_lift(m, s, connector_apply(m, s, a)) + horizontal_lift(m, s, projection_apply(m, s, a))
        np.testing.assert_allclose(rebuilt.as_vector(), a.as_vector(), atol=1e-10)

    def test_connection_is_fibre_derivative_of_half_spray(self, sphere, rng):
        s = random_states(sphere, 50, rng)
        nc = nonlinear_connection(sphere, s)
        h = 1e-5
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd = (nonlinear_connection(sphere, s.moved(dv=e)).G - nonlinear_connection(sphere, s.moved(dv=-e)).G) / (2 * h)
            np.testing.assert_allclose(fd, nc.N[..., :, j], atol=1e-6)


class TestSasaki:
    def test_vertical_norm(self, sphere):
        s = TangentState(0, [0.3, 0.1], [0.5, -0.2])
        w = np.array([0.4, 1.1])
        a = vertical_lift(sphere, s, w)
        np.testing.assert_allclose(sasaki_inner(sphere, s, a, a), _g_inner(_metric(sphere, s), w, w), rtol=1e-14)

    def test_spray_norm(self, bowl):
        s = TangentState(0, [0.3, 0.1], [0.5, -0.2])
        a = spray_at(bowl, s)
        np.testing.assert_allclose(sasaki_inner(bowl, s, a, a), _g_inner(_metric(bowl, s), s.v, s.v), rtol=1e-12)

    @pytest.mark.parametrize("name,kw", MANIFOLDS, ids=MANIFOLD_IDS)
    def test_block_orthogonality(self, name, kw, rng):
        m = manifold_by_name(name, **kw)
        s = random_states(m, 1000, rng)
        w1, w2 = rng.normal(size=s.v.shape), rng.normal(size=s.v.shape)
        val = sasaki_inner(m, s, vertical_lift(m, s, w1), horizontal_lift(m, s, w2))
        np.testing.assert_allclose(val, 0.0, atol=1e-12)

    def test_symmetric_bilinear(self, sheet, rng):
        s = random_states(sheet, 100, rng)
        a = DoubleTangentComponents(rng.normal(size=s.v.shape), rng.normal(size=s.v.shape))
        b = DoubleTangentComponents(rng.normal(size=s.v.shape), rng.normal(size=s.v.shape))
        np.testing.assert_allclose(sasaki_inner(sheet, s, a, b), sasaki_inner(sheet, s, b, a), rtol=1e-13)
        np.testing.assert_allclose(sasaki_inner(sheet, s, 2.5 * a, b), 2.5 * sasaki_inner(sheet, s, a, b), rtol=1e-13)

    @pytest.mark.parametrize("name,kw", [("sphere2", {}), ("graph_surface", {"height": "paraboloid"}),
                                         ("graph_surface", {"height": "sine_sheet"})],
                             ids=["sphere", "paraboloid", "sine_sheet"])
    def test_spray_divergence_free(self, name, kw, rng):
        m = manifold_by_name(name, **kw)
        s = random_states(m, 1000, rng)
        div = sasaki_divergence_fd(m, lambda st: spray_at(m, st), s)
        np.testing.assert_allclose(div, 0.0, atol=1e-5)

    def test_divergence_detects_friction(self, sphere, rng):
        # the canonical field v d/dv has divergence d in every chart
        s = random_states(sphere, 50, rng)
        div = sasaki_divergence_fd(sphere, lambda st: canonical_field(sphere, st), s)
        np.testing.assert_allclose(div, 2.0, rtol=1e-8)


class TestTangentialLift:
    def _unit(self, m, s):
        return unit_fibre_normalize(m, s)

    def test_radial_direction_killed(self, sphere):
        s = self._unit(sphere, TangentState(0, [0.3, 0.1], [0.5, -0.2]))
        np.testing.assert_allclose(tangential_lift(sphere, s, s.v).fibre, 0.0, atol=1e-15)

    def test_orthogonal_direction_kept(self, sphere):
        s = self._unit(sphere, TangentState(0, [0.3, 0.1], [0.5, -0.2]))
        g = _metric(sphere, s)
        w = np.array([1.0, 0.0])
        w = w - _g_inner(g, w, s.v) * s.v
        np.testing.assert_allclose(tangential_lift(sphere, s, w).fibre, vertical_lift(sphere, s, w).fibre, atol=1e-15)

    def test_tangent_to_fibre_sphere(self, sheet, rng):
        s = self._unit(sheet, random_states(sheet, 300, rng))
        w = rng.normal(size=s.v.shape)
        out = connector_apply(sheet, s, tangential_lift(sheet, s, w))
        np.testing.assert_allclose(_g_inner(_metric(sheet, s), out, s.v), 0.0, atol=1e-13)

    def test_requires_unit_state(self, sphere):
        with pytest.raises(NotUnitState):
            tangential_lift(sphere, TangentState(0, [0.0, 0.0], [1.0, 0.0]), [1.0, 0.0])


class TestFieldActions:
    def test_vertical_kills_base_functions(self, sheet):
        s = TangentState(0, [0.3, -0.7], [0.4, 0.2])
        val = apply_field_to_function(sheet, lambda st: vertical_lift(sheet, st, [1.0, -2.0]), base_function, s)
        np.testing.assert_allclose(val, 0.0, atol=1e-12)

    def test_horizontal_differentiates_base(self, sphere):
        s = TangentState(0, [0.3, -0.7], [0.4, 0.2])
        X = np.array([1.0, -2.0])
        val = apply_field_to_function(sphere, lambda st: horizontal_lift(sphere, st, X), base_function, s)
        np.testing.assert_allclose(val, base_function_grad(s.x) @ X, atol=1e-6)

    def test_spray_gives_directional_derivative(self, bowl, rng):
        s = random_states(bowl, 20, rng)
        val = apply_field_to_function(bowl, lambda st: spray_at(bowl, st), base_function, s)
        np.testing.assert_allclose(val, np.sum(base_function_grad(s.x) * s.v, axis=-1), atol=1e-6)


class TestBrackets:
    @staticmethod
    def _v(m, k):
        return lambda st: vertical_lift(m, st, np.eye(m.dimension)[k])

    def test_vertical_fields_commute(self, sphere):
        s = TangentState(0, [0.3, -0.2], [0.4, 0.1])
        b = lie_bracket_fd(sphere, self._v(sphere, 0), self._v(sphere, 1), s)
        np.testing.assert_allclose(b.as_vector(), 0.0, atol=1e-5)

    def test_flat_case(self, plane):
        s = TangentState(0, [0.3, -0.2], [0.4, 0.1])
        for k in range(2):
            b = lie_bracket_fd(plane, self._v(plane, k), lambda st: spray_at(plane, st), s)
            np.testing.assert_allclose(b.as_vector(), horizontal_lift(plane, s, np.eye(2)[k]).as_vector(), atol=1e-5)

    def test_curved_case(self, sphere, rng):
        s = random_states(sphere, 30, rng)
        N = nonlinear_connection(sphere, s).N
        for k in range(2):
            e = np.eye(2)[k]
            # [V_k, S] in the X(Y) - Y(X) convention, i.e. the spray-first form with the opposite sign
            b = lie_bracket_fd(sphere, self._v(sphere, k), lambda st: spray_at(sphere, st), s)
            expect = horizontal_lift(sphere, s, e) - vertical_lift(sphere, s, N[..., :, k])
            np.testing.assert_allclose(b.as_vector(), expect.as_vector(), atol=1e-4)

    def test_antisymmetric(self, sheet):
        s = TangentState(0, [0.3, -0.2], [0.4, 0.1])
        X = lambda st: spray_at(sheet, st)
        Y = lambda st: horizontal_lift(sheet, st, [0.2, 1.0])
        np.testing.assert_allclose(lie_bracket_fd(sheet, X, Y, s).as_vector(),
                                   -lie_bracket_fd(sheet, Y, X, s).as_vector(), atol=1e-12)


class TestSphericalOperators:
    def test_gradient_of_constant(self, sphere):
        s = unit_fibre_normalize(sphere, TangentState(0, [0.3, 0.1], [0.5, -0.2]))
        np.testing.assert_allclose(spherical_gradient_fd(sphere, s, lambda st: np.ones(np.shape(st.x)[:-1])), 0.0,
                                   atol=1e-12)

    def test_gradient_of_linear_function(self, sphere):
        s = unit_fibre_normalize(sphere, TangentState(0, [0.3, 0.1], [0.5, -0.2]))
        g = _metric(sphere, s)
        z = np.array([0.2, 1.0])
        z = z - _g_inner(g, z, s.v) * s.v
        grad = spherical_gradient_fd(sphere, s, lambda st: _g_inner(_metric(sphere, st), st.v, z))
        np.testing.assert_allclose(grad, z, atol=1e-6)

    def test_gradient_orthogonal_to_velocity(self, sheet, rng):
        s = unit_fibre_normalize(sheet, random_states(sheet, 100, rng))
        f = lambda st: np.sin(3 * st.v[..., 0]) + st.v[..., 1] ** 2
        grad = spherical_gradient_fd(sheet, s, f)
        np.testing.assert_allclose(_g_inner(_metric(sheet, s), grad, s.v), 0.0, atol=1e-10)

    def test_laplacian_of_constant(self, sphere):
        s = unit_fibre_normalize(sphere, TangentState(0, [0.3, 0.1], [0.5, -0.2]))
        np.testing.assert_allclose(spherical_laplacian_fd(sphere, s, lambda st: 3.0 + 0 * st.v[..., 0]), 0.0,
                                   atol=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0, 2 * np.pi))
    def test_circle_second_harmonic(self, theta):
        plane = manifold_by_name("euclidean", d=2)
        s = TangentState(0, [0.0, 0.0], [np.cos(theta), np.sin(theta)])
        f = lambda st: np.cos(2 * np.arctan2(st.v[..., 1], st.v[..., 0]))
        np.testing.assert_allclose(spherical_laplacian_fd(plane, s, f), -4 * np.cos(2 * theta), atol=1e-4)

    @pytest.mark.parametrize("name,kw,d", [("sphere2", {}, 2), ("euclidean", {"d": 3}, 3),
                                           ("graph_surface", {"height": "sine_sheet"}, 2)],
                             ids=["sphere", "space", "sine_sheet"])
    def test_linear_functions_are_eigenfunctions(self, name, kw, d, rng):
        m = manifold_by_name(name, **kw)
        s = random_states(m, 100, rng, unit=True)
        z = rng.normal(size=s.v.shape)
        f = lambda st: _g_inner(_metric(m, st), st.v, z)
        np.testing.assert_allclose(spherical_laplacian_fd(m, s, f), -(d - 1) * f(s), atol=1e-3)

    def test_normalize(self, sheet, rng):
        s = unit_fibre_normalize(sheet, random_states(sheet, 100, rng))
        np.testing.assert_allclose(metric_norm(sheet, s), 1.0, atol=1e-14)
