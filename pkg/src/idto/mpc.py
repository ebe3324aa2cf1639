"""Closed-loop control: simulator, plan interpolation, and replanning.

The simulator integrates the same dynamics the planner uses but with its
own (typically stiffer) contact parameters and a much smaller step, all
with semi-implicit Euler.  Between replans the latest planned trajectory
is tracked by a feed-forward PD law at the simulation rate: positions and
velocities come from a natural cubic spline through the plan knots,
feed-forward torque from linear interpolation of the planned torques.

Each replan measures the simulator state, re-anchors the problem there,
shifts the previous solution forward as a warm start, updates the goal,
and runs the solver for a small iteration budget (one, in the
receding-horizon experiments).  The trust radius carries over from solve
to solve so a single iteration is not stuck re-adapting it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np
from scipy.interpolate import CubicSpline

from .contact import ContactParams, contact_generalized_force
from .dynamics import ModelTopology, State, forward_dynamics
from .problem import ProblemDefinition
from .solver import Solution, SolverOptions, solve

if TYPE_CHECKING:
    from .scenario import Scenario

GOAL_FIXED = "fixed"
GOAL_ADVANCE = "advance-dof"


class SimulationDiverged(RuntimeError):
    """Raised when the integrator produces a non-finite state."""


@dataclass(frozen=True)
class SimulatorConfig:
    """Simulation step (s) and the simulator-side contact parameters; these
    are deliberately independent of the planner's."""

    step: float
    contact: ContactParams

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("simulator step must be > 0")


@dataclass(frozen=True)
class TrackingGains:
    """Diagonal PD gains over actuated DoFs."""

    kp: np.ndarray
    kd: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "kp", np.asarray(self.kp, dtype=float))
        object.__setattr__(self, "kd", np.asarray(self.kd, dtype=float))
        if self.kp.shape != self.kd.shape:
            raise ValueError("kp and kd must have matching shapes")
        if np.any(self.kp < 0) or np.any(self.kd < 0):
            raise ValueError("tracking gains must be >= 0")


@dataclass(frozen=True)
class GoalRule:
    """How the nominal trajectory evolves between replans.

    fixed        nominal stays exactly as the scenario built it
    advance-dof  one DoF's nominal ramps from its measured position to
                 measured + delta over the horizon (the moving-target rule
                 that keeps a spinner turning); other DoFs keep the
                 scenario nominal
    """

    kind: str = GOAL_FIXED
    dof: int = 0
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in (GOAL_FIXED, GOAL_ADVANCE):
            raise ValueError(f"unknown goal rule {self.kind!r}")


@dataclass(frozen=True)
class Disturbance:
    """Scripted velocity impulse: at time_s, add delta_velocity to one DoF."""

    time_s: float
    dof: int
    delta_velocity: float


@dataclass(frozen=True)
class MpcConfig:
    replan_period: float
    episode_seconds: float
    gains: TrackingGains
    goal: GoalRule = GoalRule()
    disturbances: tuple[Disturbance, ...] = ()
    iterations_per_replan: int = 1
    assume_zero_unactuated_velocity: bool = False

    def __post_init__(self):
        if not self.replan_period > 0:
            raise ValueError("replan period must be > 0")
        if self.episode_seconds < 0:
            raise ValueError("episode length must be >= 0")
        if self.iterations_per_replan < 1:
            raise ValueError("iterations_per_replan must be >= 1")


@dataclass(frozen=True)
class ReplanRecord:
    time_s: float
    cost: float
    constraint_violation: float
    accepted: bool
    radius: float
    solve_ms: float


@dataclass(frozen=True, eq=False)
class EpisodeLog:
    """Simulated state history (at the simulator rate) plus one record per
    replan.  ``torques`` holds the full applied generalized force vector
    (zero on unactuated DoFs).  Contact parameter sets for both the planner
    and the simulator ride along for the record."""

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    torques: np.ndarray
    replans: list[ReplanRecord]
    planner_contact: ContactParams
    simulator_contact: ContactParams
    diverged: bool = False

    def net_dof_advance(self, dof: int) -> float:
        return float(self.positions[-1, dof] - self.positions[0, dof])


def simulate_step(model: ModelTopology, params: ContactParams, state: State,
                  applied_torque: np.ndarray, dt: float) -> State:
    """One semi-implicit Euler step: forces at the current state, velocity
    update first, position from the updated velocity."""
    try:
        f_c = contact_generalized_force(model, state.q, state.v, params)
        a = forward_dynamics(model, state.q, state.v, applied_torque + f_c)
    except (ValueError, np.linalg.LinAlgError) as exc:
        # a state large enough to break the dynamics evaluation is a
        # divergence of the rollout, not a modeling error
        raise SimulationDiverged(f"dynamics evaluation failed: {exc}") from exc
    v_next = state.v + dt * a
    q_next = state.q + dt * v_next
    bad = not (np.all(np.isfinite(q_next)) and np.all(np.isfinite(v_next)))
    if bad or max(np.max(np.abs(q_next)), np.max(np.abs(v_next))) > 1e12:
        raise SimulationDiverged("state blew up during integration")
    return State(q=q_next, v=v_next)


class PlanInterpolator:
    """Continuous-time view of a solver trajectory.

    Positions through a natural cubic spline over the knots, velocities
    from its analytic derivative, feed-forward torque by linear
    interpolation of the actuated torque rows.  Queries outside the
    horizon clamp to the endpoints.
    """

    def __init__(self, positions: np.ndarray, torques: np.ndarray, dt: float,
                 actuated: tuple[int, ...]):
        n = positions.shape[0] - 1
        self.horizon = n * dt
        self._spline = CubicSpline(np.arange(n + 1) * dt, positions, axis=0,
                                   bc_type="natural")
        self._dspline = self._spline.derivative()
        self._tau_times = np.arange(n) * dt
        self._tau_knots = torques[:, list(actuated)]

    def sample(self, t: float):
        t = float(np.clip(t, 0.0, self.horizon))
        q_d = self._spline(t)
        v_d = self._dspline(t)
        tt = min(t, self._tau_times[-1])
        u_ff = np.array([np.interp(tt, self._tau_times, col)
                         for col in self._tau_knots.T])
        return q_d, v_d, u_ff


def interpolate_plan(plan: PlanInterpolator, t: float):
    return plan.sample(t)


def pd_control(gains: TrackingGains, q_d, v_d, u_ff, state: State,
               actuated) -> np.ndarray:
    """Feed-forward plus PD feedback on the actuated DoFs."""
    act = list(actuated)
    return (u_ff + gains.kp * (np.asarray(q_d)[act] - state.q[act])
            + gains.kd * (np.asarray(v_d)[act] - state.v[act]))


def _shift_warm_start(positions: np.ndarray, steps: int) -> np.ndarray:
    """Advance the previous solution by ``steps`` knots, repeating the last
    knot; the caller re-pins row 0 to the measured state."""
    steps = min(steps, positions.shape[0] - 1)
    if steps <= 0:
        return positions.copy()
    out = np.empty_like(positions)
    out[:-steps] = positions[steps:]
    out[positions.shape[0] - steps:] = positions[-1]
    return out


def _apply_goal(problem: ProblemDefinition, rule: GoalRule,
                base_q_nominal: np.ndarray, base_v_nominal: np.ndarray,
                q_measured: np.ndarray) -> ProblemDefinition:
    if rule.kind == GOAL_FIXED:
        return problem
    n = problem.num_steps
    q_nom = base_q_nominal.copy()
    v_nom = base_v_nominal.copy()
    start = q_measured[rule.dof]
    q_nom[:, rule.dof] = start + rule.delta * np.arange(n + 1) / n
    v_nom[:, rule.dof] = rule.delta / (n * problem.dt)
    return replace(problem, q_nominal=q_nom, v_nominal=v_nom)


def run_mpc(scenario: "Scenario", options: SolverOptions | None = None,
            config: MpcConfig | None = None) -> EpisodeLog:
    """Receding-horizon episode on a scenario's simulator.

    Per replan: measure the state, update the goal, shift the previous
    plan as a warm start, run a small solver budget, then track the new
    plan at the simulation rate until the next replan.  Returns the full
    state history; a diverging simulation ends the episode early with the
    log flagged rather than raising.
    """
    problem = scenario.problem
    model = problem.model
    sim = scenario.simulator
    if options is None:
        options = scenario.solver_options
    if config is None:
        config = scenario.mpc
    if sim.step > problem.dt / 10 + 1e-12:
        raise ValueError("simulator step must be at most dt/10")

    options = replace(options, max_iterations=config.iterations_per_replan)
    base_qn, base_vn = problem.q_nominal, problem.v_nominal
    steps_per_replan = max(1, int(round(config.replan_period / sim.step)))
    num_replans = int(np.floor(config.episode_seconds / config.replan_period + 1e-9))
    shift = int(np.floor(config.replan_period / problem.dt + 1e-9))

    state = State(q=problem.q_init.copy(), v=problem.v_init.copy())
    guess = getattr(scenario, "initial_guess", None)
    warm = (guess() if callable(guess)
            else np.tile(state.q, (problem.num_steps + 1, 1)))
    radius = options.initial_radius
    pending = sorted(config.disturbances, key=lambda d: d.time_s)
    times = [0.0]
    qs_hist = [state.q.copy()]
    vs_hist = [state.v.copy()]
    tau_hist = []
    replans: list[ReplanRecord] = []
    b_mat = model.b_matrix()
    act = model.actuated
    diverged = False
    t_now = 0.0

    for cycle in range(num_replans):
        q_hat = state.q.copy()
        v_hat = state.v.copy()
        if config.assume_zero_unactuated_velocity:
            v_hat[model.unactuated] = 0.0
        local = replace(problem, q_init=q_hat, v_init=v_hat)
        local = _apply_goal(local, config.goal, base_qn, base_vn, q_hat)
        warm = _shift_warm_start(warm, shift)
        warm[0] = q_hat
        sol = solve(local, warm, replace(options, initial_radius=radius))
        radius = sol.final_radius
        warm = sol.positions
        last = sol.records[-1]
        replans.append(ReplanRecord(
            time_s=t_now, cost=last.cost,
            constraint_violation=last.constraint_violation,
            accepted=bool(last.accepted and last.iteration > 0),
            radius=radius, solve_ms=sum(r.wall_ms for r in sol.records)))
        plan = PlanInterpolator(sol.positions, sol.torques, problem.dt, act)

        try:
            for j in range(steps_per_replan):
                while pending and pending[0].time_s <= t_now + 1e-12:
                    d = pending.pop(0)
                    v_kick = state.v.copy()
                    v_kick[d.dof] += d.delta_velocity
                    state = State(q=state.q, v=v_kick)
                q_d, v_d, u_ff = plan.sample((j + 1) * sim.step)
                u = pd_control(config.gains, q_d, v_d, u_ff, state, act)
                tau_full = b_mat @ u
                state = simulate_step(model, sim.contact, state, tau_full, sim.step)
                t_now += sim.step
                times.append(t_now)
                qs_hist.append(state.q.copy())
                vs_hist.append(state.v.copy())
                tau_hist.append(tau_full)
        except SimulationDiverged:
            diverged = True
            break

    tau_arr = (np.array(tau_hist) if tau_hist
               else np.zeros((0, model.nv)))
    return EpisodeLog(times=np.array(times), positions=np.array(qs_hist),
                      velocities=np.array(vs_hist), torques=tau_arr,
                      replans=replans, planner_contact=problem.contact,
                      simulator_contact=sim.contact, diverged=diverged)
