"""
Dual-form state tests.

    - projecting the origin onto a segment gives the textbook alpha and norm
    - the closed-form norm update agrees with the Gram re-sum
    - a step toward a violated point raises the potential by at least 1/||y(x)(x,1)||^2
    - operations on the empty state are contract violations
"""

import math

import numpy as np
import pytest
from pytest import approx

from dual_geometry import (DualState, LabeledPoint, SampleGeometry, augmented_inner, combine,
                           margin_value, margin_values, potential, project_origin_to_segment,
                           recompute_norm_sq, segment_coefficient, state_inner)
from errors import ContractViolation, InputError
from kernel_core import KernelSpec, gram


# -- Helpers -----------------------------------------------------------------

def _geometry(points, labels, spec=KernelSpec.linear()):
    points = np.asarray(points, dtype=float)
    return SampleGeometry.exact(gram(spec, points), labels, points)


def _two_points():
    return _geometry([[0.5, 0.0], [-0.5, 0.0]], [1, -1])


def _ball_points(rng, n, d):
    x = rng.normal(size=(n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * rng.random(n)[:, None] ** (1.0 / d)


class TestStates:
    def test_point_state(self):
        g = _two_points()
        s = DualState.point(g, 0)
        assert s.weights == {0: 1.0}
        assert s.norm_sq == approx(1.25)
        assert margin_value(s, g, 0) == approx(1.25)

    def test_projection_two_points(self):
        g = _two_points()
        s, alpha = project_origin_to_segment(DualState.point(g, 0), g, 1)
        assert alpha == approx(0.5)
        assert s.weights == approx({0: 0.5, 1: 0.5})
        assert s.norm_sq == approx(0.25)
        assert recompute_norm_sq(s, g) == approx(0.25)
        assert margin_values(s, g, [0, 1]) == approx([0.25, 0.25])
        assert potential(s) == approx(4.0)

    def test_potential_conventions(self):
        assert potential(DualState.empty()) == 0.0
        assert potential(DualState({0: 1.0}, {0: 1.0}, 0.0)) == math.inf

    def test_coincident_points_collapse(self):
        g = _geometry([[0.3, 0.0], [0.3, 0.0]], [1, -1])
        s, _ = project_origin_to_segment(DualState.point(g, 0), g, 1)
        assert s.norm_sq < 1e-12
        assert potential(s) > 1e10

    def test_augmented_inner_is_norm_on_diagonal(self):
        g = _two_points()
        s, _ = project_origin_to_segment(DualState.point(g, 0), g, 1)
        assert augmented_inner(s, s, g) == approx(recompute_norm_sq(s, g))
        assert augmented_inner(DualState.point(g, 0), DualState.point(g, 1), g) == approx(-0.75)

    def test_json_round_trip(self):
        g = _two_points()
        s, _ = project_origin_to_segment(DualState.point(g, 0), g, 1)
        back = DualState.from_json(s.to_json())
        assert back.weights == s.weights
        assert back.scales == s.scales
        assert back.norm_sq == s.norm_sq

    def test_malformed_json(self):
        with pytest.raises(InputError):
            DualState.from_json({'weights': [[0, 1.0]]})


class TestContracts:
    def test_empty_state_operations(self):
        g = _two_points()
        empty = DualState.empty()
        with pytest.raises(ContractViolation):
            margin_value(empty, g, 0)
        with pytest.raises(ContractViolation):
            state_inner(empty, g, 0)
        with pytest.raises(ContractViolation):
            project_origin_to_segment(empty, g, 0)
        assert recompute_norm_sq(empty, g) == 0.0

    def test_bad_label(self):
        with pytest.raises(InputError):
            LabeledPoint(np.zeros(2), 0, 3)

    def test_norm_drift_detected(self):
        g = _two_points()
        tampered = DualState({0: 1.0}, {0: 1.0}, 5.0)
        with pytest.raises(ContractViolation):
            combine(tampered, g, 1, 1.0, verify=True)

    def test_degenerate_segment(self):
        assert segment_coefficient(1.0, 1.0, 1.0) is None
        assert segment_coefficient(1.0, -1.0, 1.0) == 0.5
        assert segment_coefficient(1.0, 2.0, 4.0) == 1.0


class TestProjectionProgress:
    @pytest.mark.parametrize('spec', [KernelSpec.linear(),
                                      KernelSpec.normalized(KernelSpec.rbf(0.5))], ids=str)
    def test_potential_gain_on_violated_points(self, spec):
        rng = np.random.default_rng(17)
        checked = 0
        for trial in range(100):
            d = int(rng.integers(2, 11))
            X = _ball_points(rng, 30, d)
            y = rng.choice([-1, 1], size=30)
            g = _geometry(X, y, spec)
            state = DualState.point(g, int(rng.integers(30)))
            for _ in range(20):
                violated = np.flatnonzero(margin_values(state, g, np.arange(30)) <= 0.0)
                if violated.size == 0:
                    break
                p = int(rng.choice(violated))
                before = potential(state)
                state, _ = project_origin_to_segment(state, g, p, verify=True)
                gain = 1.0 / g.augmented_sq_norm(p)
                if state.norm_sq < 1e-4:
                    break
                assert potential(state) >= (before + gain) * (1.0 - 1e-9)
                checked += 1
        assert checked > 50

    @pytest.mark.parametrize('spec', [KernelSpec.linear(), KernelSpec.rbf(0.6)], ids=str)
    def test_projection_is_closest_on_the_segment(self, spec):
        rng = np.random.default_rng(31)
        X = _ball_points(rng, 25, 3)
        y = rng.choice([-1, 1], size=25)
        g = _geometry(X, y, spec)
        state = combine(DualState.point(g, 0), g, 1, 0.4)
        for p in (2, 7, 19):
            projected, _ = project_origin_to_segment(state, g, p)
            inner = state_inner(state, g, p)
            end_sq = g.augmented_sq_norm(p)
            alphas = rng.random(1000)
            sampled = (alphas ** 2 * state.norm_sq + 2.0 * alphas * (1.0 - alphas) * inner
                       + (1.0 - alphas) ** 2 * end_sq)
            assert projected.norm_sq <= sampled.min() + 1e-12
            assert projected.norm_sq <= min(state.norm_sq, end_sq) + 1e-12

    def test_closed_form_matches_resum(self):
        rng = np.random.default_rng(2)
        X = _ball_points(rng, 40, 5)
        y = rng.choice([-1, 1], size=40)
        g = _geometry(X, y, KernelSpec.rbf(0.8))
        state = DualState.point(g, 0)
        for p in rng.integers(0, 40, size=50):
            alpha = float(rng.random())
            state = combine(state, g, int(p), alpha)
            assert sum(state.weights.values()) == approx(1.0)
            assert state.norm_sq == approx(recompute_norm_sq(state, g), rel=1e-7, abs=1e-12)
