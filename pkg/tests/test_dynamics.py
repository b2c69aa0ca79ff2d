import numpy as np
import pytest

from consensuslab.dynamics import (
    Cascade,
    cascade_field,
    cascade_rhs,
    compositional_controller,
    conventional_controller,
    gps_velocity_controller,
    matched_cascade_state,
    naive_serial_controller,
    reconstruct_plant,
)
from consensuslab.exceptions import OperatorError, ShapeError
from consensuslab.graphs import build_laplacian, path_graph
from consensuslab.operators import (
    DelayedAbsoluteVelocity,
    DelayedRelative,
    LinearStatic,
    LinearTimeVarying,
    Saturated,
)

L5 = build_laplacian(path_graph(5))
L2 = build_laplacian(path_graph(2))


def lti_cascade(n_stages, L=L5):
    op = LinearStatic(L)
    return Cascade((op,) * n_stages)


class TestCascadeField:
    def test_single_stage_is_classical_consensus(self):
        xi = np.array([1.0, 2.0, -1.0, 0.5, 0.0])
        out = cascade_field(lti_cascade(1), None, xi, 0.0)
        assert np.allclose(out, -L5 @ xi)

    def test_zero_stages_give_double_integrator(self):
        zero = LinearStatic(np.zeros((3, 3)))
        casc = Cascade((zero, zero))
        xi = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        out = cascade_field(casc, None, xi, 0.0)
        assert np.array_equal(out, [4.0, 5.0, 6.0, 0.0, 0.0, 0.0])

    def test_consensus_is_equilibrium(self):
        casc = lti_cascade(2)
        xi = np.concatenate((np.full(5, 3.3), np.zeros(5)))
        assert np.abs(cascade_field(casc, None, xi, 0.0)).max() < 1e-12

    def test_equilibrium_for_all_inner_kinds(self):
        ops = (
            LinearStatic(L5),
            Saturated(L5),
            LinearTimeVarying(L5, omega=np.full(5, 1.3), phi=np.zeros(5)),
        )
        casc = Cascade(ops[:3])
        xi = np.concatenate((np.full(5, -2.0), np.zeros(5), np.zeros(5)))
        assert np.abs(cascade_field(casc, None, xi, 1.7)).max() < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            cascade_field(lti_cascade(2), None, np.zeros(7), 0.0)

    def test_u_ref_feeds_outer_stage(self):
        casc = lti_cascade(2)
        xi = np.zeros(10)
        out = cascade_field(casc, lambda t: np.full(5, 2.0), xi, 0.0)
        assert np.array_equal(out[5:], np.full(5, 2.0))
        assert np.array_equal(out[:5], np.zeros(5))

    def test_rhs_closure_matches_field(self):
        op = Saturated(L5)
        casc = Cascade((op, LinearStatic(L5)))
        rhs = cascade_rhs(casc, lambda t: np.full(5, 0.3))
        rng = np.random.default_rng(0)
        for _ in range(25):
            xi = rng.normal(size=10)
            t = rng.uniform(0, 10)
            a = rhs(xi, t, None)
            b = cascade_field(casc, lambda t: np.full(5, 0.3), xi, t, None)
            assert np.abs(a - b).max() < 1e-15


class TestCascadeValidation:
    def test_delayed_inner_stage_rejected(self):
        delayed = DelayedRelative(path_graph(5).weights, lambda t: 0.1, tau_max=0.1)
        with pytest.raises(OperatorError):
            Cascade((delayed, LinearStatic(L5)))

    def test_delayed_outer_stage_allowed(self):
        delayed = DelayedRelative(path_graph(5).weights, lambda t: 0.1, tau_max=0.1)
        casc = Cascade((LinearStatic(L5), delayed))
        assert casc.order == 2
        assert casc.tau_max == 0.1

    def test_order_cap(self):
        with pytest.raises(OperatorError):
            Cascade((LinearStatic(L5),) * 5)

    def test_mixed_sizes_rejected(self):
        with pytest.raises(ShapeError):
            Cascade((LinearStatic(L5), LinearStatic(L2)))


class TestControllers:
    def test_compositional_lti_expansion(self):
        op = LinearStatic(L5)
        rng = np.random.default_rng(1)
        for _ in range(20):
            x = rng.normal(size=5)
            v = rng.normal(size=5)
            u = compositional_controller(op, op, x, v, 0.0)
            expanded = -(L5 + L5) @ v - L5 @ (L5 @ x)
            assert np.abs(u - expanded).max() < 1e-12

    def test_relative_feedback_nulls_consensus_state(self):
        op = LinearStatic(L5)
        x = np.full(5, 4.0)
        v = np.full(5, -1.5)
        for ctrl in (compositional_controller, conventional_controller,
                     naive_serial_controller):
            assert np.abs(ctrl(op, op, x, v, 0.0)).max() < 1e-12

    def test_compositional_saturated_hand_value(self):
        op = Saturated(L2)
        u = compositional_controller(op, op, np.array([0.0, 10.0]),
                                     np.zeros(2), 0.0)
        assert np.allclose(u, [0.0, -1.0])

    def test_conventional_saturated_formula(self):
        op = Saturated(L5)
        rng = np.random.default_rng(2)
        x, v = rng.normal(size=5) * 3, rng.normal(size=5) * 3
        u = conventional_controller(op, op, x, v, 0.0)
        expected = -np.clip(L5 @ v, -1, 1) - np.clip(L5 @ x, -1, 1)
        assert np.allclose(u, expected)

    def test_naive_serial_saturated_formula(self):
        op = Saturated(L5)
        rng = np.random.default_rng(3)
        x, v = rng.normal(size=5) * 3, rng.normal(size=5) * 3
        u = naive_serial_controller(op, op, x, v, 0.0)
        inner = np.clip(L5 @ x, -1, 1)
        expected = -2 * np.clip(L5 @ v, -1, 1) - np.clip(L5 @ inner, -1, 1)
        assert np.allclose(u, expected)

    def test_naive_serial_time_varying_formula(self):
        omega = np.array([1.0, 0.7, 1.1, 2.0, 0.6])
        phi = np.array([0.1, 1.0, 2.0, 3.0, 4.0])
        op = LinearTimeVarying(L5, omega, phi)
        rng = np.random.default_rng(4)
        x, v, t = rng.normal(size=5), rng.normal(size=5), 1.234
        D = np.diag(np.maximum(np.sin(omega * t + phi), 0.0))
        Lt = D @ L5
        u = naive_serial_controller(op, op, x, v, t)
        assert np.allclose(u, -(Lt + Lt) @ v - Lt @ (Lt @ x))

    def test_delayed_kinds_inadmissible_in_baselines(self):
        delayed = DelayedAbsoluteVelocity(np.ones(5), lambda s: 0.0,
                                          lambda t: 0.0, tau_max=0.0)
        op = LinearStatic(L5)
        with pytest.raises(OperatorError):
            conventional_controller(delayed, op, np.zeros(5), np.zeros(5), 0.0)
        with pytest.raises(OperatorError):
            naive_serial_controller(op, delayed, np.zeros(5), np.zeros(5), 0.0)
        with pytest.raises(OperatorError):
            compositional_controller(delayed, op, np.zeros(5), np.zeros(5), 0.0)


class TestReconstruction:
    def test_velocity_cancellation(self):
        casc = lti_cascade(2)
        xi1 = np.array([0.5, 1.0, -2.0, 0.0, 3.0])
        xi = np.concatenate((xi1, L5 @ xi1))
        x, xdot = reconstruct_plant(casc, xi, 0.0)
        assert np.array_equal(x, xi1)
        assert np.abs(xdot).max() < 1e-15

    def test_consensus_positions_pass_through_velocity(self):
        casc = lti_cascade(2)
        xi = np.concatenate((np.ones(5), np.array([1.0, 2, 3, 4, 5])))
        _, xdot = reconstruct_plant(casc, xi, 0.0)
        assert np.array_equal(xdot, [1.0, 2, 3, 4, 5])

    def test_order_one_has_no_velocity(self):
        x, xdot = reconstruct_plant(lti_cascade(1), np.ones(5), 0.0)
        assert xdot is None

    def test_matched_state_roundtrip(self):
        casc = lti_cascade(2)
        rng = np.random.default_rng(5)
        x0, v0 = rng.normal(size=5), rng.normal(size=5)
        xi0 = matched_cascade_state(casc, x0, v0)
        x, v = reconstruct_plant(casc, xi0, 0.0)
        assert np.allclose(x, x0)
        assert np.allclose(v, v0)

    def test_matched_state_requires_order_two(self):
        with pytest.raises(OperatorError):
            matched_cascade_state(lti_cascade(3), np.zeros(5), np.zeros(5))


class TestGpsController:
    def test_ideal_formula(self):
        op = LinearStatic(L5)
        ctrl = gps_velocity_controller(np.ones(5), op, v_ref=10.0)
        rng = np.random.default_rng(6)
        x, v = rng.normal(size=5), rng.normal(size=5)
        assert np.allclose(ctrl(x, v, 0.0), -(v - 10.0) - L5 @ x)

    def test_delayed_needs_history(self):
        op = LinearStatic(L5)
        ctrl = gps_velocity_controller(np.ones(5), op, 10.0,
                                       delays=lambda t: 0.5)
        with pytest.raises(OperatorError):
            ctrl(np.zeros(5), np.zeros(5), 1.0)

    def test_delayed_reads_velocity_history(self):
        op = LinearStatic(L2)
        ctrl = gps_velocity_controller(np.ones(2), op, 0.0,
                                       delays=lambda t: 1.0)
        hist = lambda s: np.array([2.0 * s, -s])
        u = ctrl(np.zeros(2), np.zeros(2), 3.0, hist)
        assert np.allclose(u, [-4.0, 2.0])
