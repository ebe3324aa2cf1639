"""Simulator, plan tracking, and the receding-horizon loop."""

import dataclasses

import numpy as np
import pytest

from conftest import ball_model, default_contact, pendulum_model
from idto.contact import ContactParams
from idto.dynamics import Body, Joint, ModelTopology, State, WORLD
from idto.mpc import (Disturbance, GoalRule, MpcConfig, PlanInterpolator,
                      SimulationDiverged, SimulatorConfig, TrackingGains,
                      _apply_goal, _shift_warm_start, pd_control, run_mpc,
                      simulate_step)


def free_body_model() -> ModelTopology:
    return ModelTopology(
        bodies=(Body(mass=2.0, inertia=0.04),),
        joints=(Joint(kind="free", parent=WORLD),),
        actuated=(0, 1, 2))


class TestSimulateStep:
    def test_ballistic_semi_implicit_update(self):
        model = free_body_model()
        state = State(q=np.array([0.0, 1.0, 0.0]), v=np.array([1.0, 0.0, 0.0]))
        dt = 0.01
        nxt = simulate_step(model, default_contact(), state,
                            np.zeros(3), dt)
        # velocity first, then position with the updated velocity
        v_want = state.v + dt * np.array([0.0, -9.81, 0.0])
        np.testing.assert_allclose(nxt.v, v_want, atol=1e-12)
        np.testing.assert_allclose(nxt.q, state.q + dt * v_want, atol=1e-12)

    def test_applied_torque_accelerates(self):
        model = free_body_model()
        state = State(q=np.zeros(3), v=np.zeros(3))
        nxt = simulate_step(model, default_contact(), state,
                            np.array([4.0, 2.0 * 9.81, 0.0]), 0.1)
        assert nxt.v[0] == pytest.approx(0.1 * 2.0)
        assert nxt.v[1] == pytest.approx(0.0, abs=1e-12)

    def test_blowup_raises_simulation_diverged(self):
        model = free_body_model()
        state = State(q=np.full(3, 1e11), v=np.full(3, 1e13))
        with pytest.raises(SimulationDiverged):
            simulate_step(model, default_contact(), state, np.zeros(3), 0.01)


class TestPlanInterpolation:
    def make_plan(self):
        dt = 0.1
        knots = np.array([[0.0, 0.0], [0.1, -0.2], [0.4, -0.1], [0.2, 0.3]])
        torques = np.array([[1.0, 9.0], [2.0, 9.0], [4.0, 9.0]])
        return PlanInterpolator(knots, torques, dt, actuated=(0,)), knots, dt

    def test_spline_interpolates_knots(self):
        plan, knots, dt = self.make_plan()
        for k, row in enumerate(knots):
            q_d, _, _ = plan.sample(k * dt)
            np.testing.assert_allclose(q_d, row, atol=1e-12)

    def test_velocity_is_spline_derivative(self):
        plan, _, _ = self.make_plan()
        t, eps = 0.17, 1e-6
        _, v_d, _ = plan.sample(t)
        hi, _, _ = plan.sample(t + eps)
        lo, _, _ = plan.sample(t - eps)
        np.testing.assert_allclose(v_d, (hi - lo) / (2 * eps), atol=1e-6)

    def test_feedforward_linear_interpolation(self):
        plan, _, dt = self.make_plan()
        _, _, u = plan.sample(0.5 * dt)
        assert u[0] == pytest.approx(1.5)
        # torque knots exist for steps 0..N-1 only; clamp beyond
        _, _, u_end = plan.sample(10.0)
        assert u_end[0] == pytest.approx(4.0)

    def test_queries_clamp_to_horizon(self):
        plan, knots, _ = self.make_plan()
        q_d, _, _ = plan.sample(99.0)
        np.testing.assert_allclose(q_d, knots[-1], atol=1e-12)
        q_d0, _, _ = plan.sample(-1.0)
        np.testing.assert_allclose(q_d0, knots[0], atol=1e-12)


class TestControllerPieces:
    def test_pd_control_formula(self):
        gains = TrackingGains(kp=np.array([10.0]), kd=np.array([2.0]))
        state = State(q=np.array([0.2, 9.9]), v=np.array([0.1, -3.0]))
        u = pd_control(gains, np.array([0.5, 0.0]), np.array([0.3, 0.0]),
                       np.array([1.0]), state, actuated=(0,))
        assert u[0] == pytest.approx(1.0 + 10.0 * 0.3 + 2.0 * 0.2)

    def test_warm_start_shift(self):
        plan = np.arange(10.0).reshape(5, 2)
        shifted = _shift_warm_start(plan, 2)
        np.testing.assert_allclose(shifted[:3], plan[2:])
        np.testing.assert_allclose(shifted[3], plan[-1])
        np.testing.assert_allclose(shifted[4], plan[-1])
        np.testing.assert_allclose(_shift_warm_start(plan, 0), plan)
        np.testing.assert_allclose(_shift_warm_start(plan, 99),
                                   np.tile(plan[-1], (5, 1)))

    def test_goal_rule_advances_one_dof(self, spinner_scenario):
        problem = spinner_scenario.problem
        rule = GoalRule(kind="advance-dof", dof=2, delta=2.0)
        q_meas = problem.q_init + 0.3
        shifted = _apply_goal(problem, rule, problem.q_nominal,
                              problem.v_nominal, q_meas)
        n = problem.num_steps
        np.testing.assert_allclose(shifted.q_nominal[0, 2], q_meas[2])
        np.testing.assert_allclose(shifted.q_nominal[-1, 2], q_meas[2] + 2.0)
        np.testing.assert_allclose(np.diff(shifted.q_nominal[:, 2]),
                                   2.0 / n)
        np.testing.assert_allclose(shifted.v_nominal[:, 2],
                                   2.0 / (n * problem.dt))
        # other DoFs keep the scenario nominal
        np.testing.assert_allclose(shifted.q_nominal[:, :2],
                                   problem.q_nominal[:, :2])

    def test_fixed_goal_is_identity(self, spinner_scenario):
        problem = spinner_scenario.problem
        out = _apply_goal(problem, GoalRule(kind="fixed"), problem.q_nominal,
                          problem.v_nominal, problem.q_init)
        assert out is problem

    def test_bad_goal_kind_rejected(self):
        with pytest.raises(ValueError, match="goal rule"):
            GoalRule(kind="chase")

    def test_config_validation(self):
        gains = TrackingGains(kp=np.ones(2), kd=np.ones(2))
        with pytest.raises(ValueError, match="replan"):
            MpcConfig(replan_period=0.0, episode_seconds=1.0, gains=gains)
        with pytest.raises(ValueError, match="iterations"):
            MpcConfig(replan_period=0.1, episode_seconds=1.0, gains=gains,
                      iterations_per_replan=0)
        with pytest.raises(ValueError, match=">= 0"):
            TrackingGains(kp=np.array([-1.0]), kd=np.array([0.0]))


class TestEpisodes:
    def test_short_spinner_episode(self, spinner_scenario):
        import dataclasses
        config = dataclasses.replace(spinner_scenario.mpc,
                                     episode_seconds=0.3, disturbances=())
        episode = run_mpc(spinner_scenario, config=config)
        assert not episode.diverged
        assert len(episode.replans) == 6
        # replan cadence: 0.05 s of simulation at 0.005 s per step
        assert episode.times.size == 1 + 6 * 10
        assert episode.positions.shape == (61, 3)
        assert episode.torques.shape == (60, 3)
        # unactuated rows of the applied torques are identically zero
        np.testing.assert_allclose(episode.torques[:, 2], 0.0)
        assert episode.replans[0].solve_ms > 0.0

    def test_disturbance_applied_at_scripted_time(self, spinner_scenario):
        import dataclasses
        kick = Disturbance(time_s=0.1, dof=2, delta_velocity=-3.0)
        config = dataclasses.replace(spinner_scenario.mpc,
                                     episode_seconds=0.2,
                                     disturbances=(kick,))
        quiet = dataclasses.replace(config, disturbances=())
        with_kick = run_mpc(spinner_scenario, config=config)
        without = run_mpc(spinner_scenario, config=quiet)
        step = np.searchsorted(with_kick.times, 0.1)
        jump = with_kick.velocities[step + 1, 2] - without.velocities[step + 1, 2]
        assert jump == pytest.approx(-3.0, abs=0.15)

    def test_divergent_episode_is_flagged_not_raised(self, spinner_scenario):
        import dataclasses
        bomb = Disturbance(time_s=0.05, dof=2, delta_velocity=1e13)
        config = dataclasses.replace(spinner_scenario.mpc,
                                     episode_seconds=0.5,
                                     disturbances=(bomb,))
        episode = run_mpc(spinner_scenario, config=config)
        assert episode.diverged
        assert episode.times[-1] < 0.5

    def test_net_dof_advance(self, spinner_scenario):
        import dataclasses
        config = dataclasses.replace(spinner_scenario.mpc,
                                     episode_seconds=0.5, disturbances=())
        episode = run_mpc(spinner_scenario, config=config)
        want = episode.positions[-1, 2] - episode.positions[0, 2]
        assert episode.net_dof_advance(2) == pytest.approx(want)

    def test_simulator_step_must_resolve_replan_period(self, spinner_scenario):
        import dataclasses
        coarse = dataclasses.replace(spinner_scenario.simulator, step=0.02)
        scenario = dataclasses.replace(spinner_scenario, simulator=coarse)
        with pytest.raises(ValueError, match="dt/10"):
            run_mpc(scenario)
