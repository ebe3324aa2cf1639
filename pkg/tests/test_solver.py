"""Trust-region Gauss-Newton solver: steps, radius rules, and full solves."""

import dataclasses

import numpy as np
import pytest

import idto.solver as solver_mod
from conftest import ball_model, cart_model, make_problem
from idto.banded import BlockPentaMatrix, factorize
from idto.problem import total_cost, unactuated_constraint
from idto.solver import (CAUCHY, CONVERGED, DOGLEG, FACTORIZATION_EXHAUSTED,
                         FULL_NEWTON, MAX_ITERATIONS, RADIUS_FLOOR,
                         SolverOptions, dogleg_step, lagrange_multipliers,
                         scaling_matrix, solve, trust_ratio_and_update)


def small_quadratic(seed=0, n=2, b=2):
    rng = np.random.default_rng(seed)
    diag = rng.standard_normal((n, b, b))
    diag = diag @ diag.transpose(0, 2, 1) + 3.0 * np.eye(b)
    sub1 = 0.1 * rng.standard_normal((n - 1, b, b))
    hess = BlockPentaMatrix(diag, sub1, np.zeros((max(n - 2, 0), b, b)))
    grad = rng.standard_normal(n * b)
    return hess, grad


class TestScaling:
    def test_quarter_power_of_diagonal(self):
        hess, _ = small_quadratic()
        d = scaling_matrix(hess)
        np.testing.assert_allclose(d, hess.diagonal() ** -0.25)

    def test_disabled_gives_ones(self):
        hess, _ = small_quadratic()
        np.testing.assert_allclose(scaling_matrix(hess, enabled=False), 1.0)

    def test_nonpositive_diagonal_rejected(self):
        hess, _ = small_quadratic()
        hess.diag[0, 0, 0] = 0.0
        with pytest.raises(ValueError, match="positive"):
            scaling_matrix(hess)


class TestDogleg:
    def setup_method(self):
        self.hess, self.grad = small_quadratic(seed=1)
        self.fact = factorize(self.hess)
        self.d = scaling_matrix(self.hess)
        dense = self.hess.to_dense()
        self.newton = -np.linalg.solve(dense, self.grad)
        self.newton_norm = np.linalg.norm(self.newton / self.d)
        gt = self.d * self.grad
        curv = (self.d * gt) @ dense @ (self.d * gt)
        self.alpha = float(gt @ gt) / curv
        self.cauchy_norm = self.alpha * np.linalg.norm(gt)

    def test_newton_step_inside_region(self):
        p, norm, tag = dogleg_step(self.grad, self.hess, self.fact, self.d,
                                   radius=self.newton_norm * 2)
        assert tag == FULL_NEWTON
        np.testing.assert_allclose(p, self.newton, atol=1e-12)
        assert norm == pytest.approx(self.newton_norm)

    def test_gradient_step_for_small_radius(self):
        radius = 0.25 * self.cauchy_norm
        p, norm, tag = dogleg_step(self.grad, self.hess, self.fact, self.d,
                                   radius=radius)
        assert tag == CAUCHY
        assert norm == pytest.approx(radius)
        scaled = p / self.d
        assert np.linalg.norm(scaled) == pytest.approx(radius)
        gt = self.d * self.grad
        cos = -(scaled @ gt) / (np.linalg.norm(scaled) * np.linalg.norm(gt))
        assert cos == pytest.approx(1.0)

    def test_interpolated_step_on_boundary(self):
        assert self.cauchy_norm < self.newton_norm
        radius = 0.5 * (self.cauchy_norm + self.newton_norm)
        p, norm, tag = dogleg_step(self.grad, self.hess, self.fact, self.d,
                                   radius=radius)
        assert tag == DOGLEG
        assert norm == pytest.approx(radius)
        scaled = p / self.d
        assert np.linalg.norm(scaled) == pytest.approx(radius, rel=1e-12)
        # the step must lie on the segment between the scaled Cauchy and
        # Newton points
        pu = -self.alpha * self.d * self.grad
        pb = self.newton / self.d
        w = pb - pu
        s = (scaled - pu) @ w / (w @ w)
        assert 0.0 < s < 1.0
        np.testing.assert_allclose(scaled, pu + s * w, atol=1e-10)

    def test_two_dimensional_closed_form(self):
        """Hand-derivable 2-D instance: diagonal Hessian, no scaling."""
        hess = BlockPentaMatrix(np.array([[[2.0, 0.0], [0.0, 1.0]]]),
                                np.zeros((0, 2, 2)), np.zeros((0, 2, 2)))
        grad = np.array([1.0, 1.0])
        ones = np.ones(2)
        newton = np.array([-0.5, -1.0])
        alpha = (grad @ grad) / (grad @ hess.to_dense() @ grad)  # 2/3
        pu = -alpha * grad
        radius = 1.0  # between the Cauchy length (0.943) and |newton| (1.118)
        w = newton - pu
        a, b, c = w @ w, pu @ w, pu @ pu - radius ** 2
        s = (-b + np.sqrt(b * b - a * c)) / a
        want = pu + s * w
        p, norm, tag = dogleg_step(grad, hess, factorize(hess), ones, radius)
        assert tag == DOGLEG
        np.testing.assert_allclose(p, want, atol=1e-10)
        assert norm == pytest.approx(radius)


class TestRadiusRules:
    opts = SolverOptions(max_radius=10.0)

    def test_poor_step_shrinks_by_four(self):
        accept, rho, radius = trust_ratio_and_update(
            1.0, 0.95, predicted=1.0, radius=2.0, at_boundary=False,
            options=self.opts)
        assert rho == pytest.approx(0.05)
        assert radius == 0.5
        assert accept  # eta = 0: any positive decrease is accepted

    def test_poor_step_rejected_at_higher_threshold(self):
        strict = SolverOptions(max_radius=10.0, acceptance_threshold=0.125)
        accept, rho, radius = trust_ratio_and_update(
            1.0, 0.9, predicted=1.0, radius=2.0, at_boundary=False,
            options=strict)
        assert rho == pytest.approx(0.1)
        assert not accept
        assert radius == 0.5

    def test_negative_decrease_rejected(self):
        accept, rho, radius = trust_ratio_and_update(
            1.0, 1.2, predicted=1.0, radius=2.0, at_boundary=True,
            options=self.opts)
        assert not accept
        assert rho < 0
        assert radius == 0.5

    def test_excellent_boundary_step_doubles(self):
        accept, rho, radius = trust_ratio_and_update(
            1.0, 0.1, predicted=1.0, radius=2.0, at_boundary=True,
            options=self.opts)
        assert accept and rho == pytest.approx(0.9)
        assert radius == 4.0

    def test_excellent_interior_step_keeps_radius(self):
        _, _, radius = trust_ratio_and_update(
            1.0, 0.1, predicted=1.0, radius=2.0, at_boundary=False,
            options=self.opts)
        assert radius == 2.0

    def test_growth_caps_at_max(self):
        _, _, radius = trust_ratio_and_update(
            1.0, 0.0, predicted=1.0, radius=8.0, at_boundary=True,
            options=self.opts)
        assert radius == 10.0

    def test_middling_step_keeps_radius(self):
        _, _, radius = trust_ratio_and_update(
            1.0, 0.5, predicted=1.0, radius=2.0, at_boundary=True,
            options=self.opts)
        assert radius == 2.0


class TestSolve:
    def test_converges_on_reach_task(self):
        problem = make_problem(cart_model(), num_steps=6, dt=0.1,
                               q_target=[0.5])
        guess = np.zeros((7, 1))
        sol = solve(problem, guess, SolverOptions(max_iterations=100))
        assert sol.termination == CONVERGED
        assert sol.records[-1].cost < total_cost(problem, guess)
        assert abs(sol.positions[-1, 0] - 0.5) < 0.2

    def test_linear_quadratic_matches_dense_oracle(self):
        """Contact-free fully actuated tracking is an affine least-squares
        problem, so the solver must land on the unique optimum found by a
        dense normal-equations oracle, and fast."""
        from idto.problem import residual

        problem = make_problem(cart_model(), num_steps=6, dt=0.1,
                               q_target=[0.5])
        guess = np.zeros((7, 1))
        r0 = residual(problem, guess)
        eps = 1e-6
        cols = []
        for i in range(6):
            d = np.zeros((7, 1))
            d[i + 1, 0] = eps
            cols.append((residual(problem, guess + d)
                         - residual(problem, guess - d)) / (2 * eps))
        jac = np.stack(cols, axis=1)
        best, *_ = np.linalg.lstsq(jac, -r0, rcond=None)
        sol = solve(problem, guess, SolverOptions(max_iterations=10,
                                                  initial_radius=50.0,
                                                  max_radius=100.0))
        assert sol.termination == CONVERGED
        assert len(sol.records) <= 4  # initial point plus at most 3 steps
        np.testing.assert_allclose(sol.positions[1:, 0], best, atol=1e-8)

    def test_optimal_guess_ends_before_any_step(self):
        """Resting on the nominal gives an exactly zero gradient: the solver
        must notice before proposing a single step."""
        problem = make_problem(cart_model(damping=0.0), num_steps=4,
                               q_target=[0.0])
        guess = np.zeros((5, 1))
        sol = solve(problem, guess, SolverOptions(max_iterations=50))
        assert sol.termination == CONVERGED
        assert len(sol.records) == 1
        np.testing.assert_array_equal(sol.positions, guess)

    def test_first_record_is_initial_point(self):
        problem = make_problem(cart_model(), num_steps=4)
        sol = solve(problem, np.zeros((5, 1)), SolverOptions(max_iterations=3))
        first = sol.records[0]
        assert first.iteration == 0
        assert first.step_norm == 0.0
        assert np.isnan(first.rho)
        assert first.accepted
        assert first.cost == pytest.approx(total_cost(problem,
                                                      np.zeros((5, 1))))

    def test_zero_iteration_budget(self):
        problem = make_problem(cart_model(), num_steps=4)
        sol = solve(problem, np.zeros((5, 1)), SolverOptions(max_iterations=0))
        assert len(sol.records) == 1
        assert sol.termination == MAX_ITERATIONS

    def test_accepted_costs_strictly_decrease(self):
        problem = make_problem(ball_model(), num_steps=6, mode="penalty")
        guess = np.zeros((7, 3))
        guess[1:, 1] = 0.15
        sol = solve(problem, guess, SolverOptions(max_iterations=60))
        costs = [r.cost for r in sol.records if r.accepted]
        assert len(costs) > 2
        assert all(b < a for a, b in zip(costs, costs[1:]))

    def test_rejected_steps_leave_the_incumbent_alone(self):
        """A rejected iteration must not move the trajectory: its record
        carries the same cost and violation as the iteration before it."""
        problem = make_problem(ball_model(), num_steps=6, mode="lm")
        guess = np.zeros((7, 3))
        guess[1:, 1] = 0.15
        sol = solve(problem, guess, SolverOptions(max_iterations=120))
        rejected = [i for i, r in enumerate(sol.records) if not r.accepted]
        assert rejected, "expected at least one rejected step in this run"
        for i in rejected:
            assert sol.records[i].cost == sol.records[i - 1].cost
            assert (sol.records[i].constraint_violation
                    == sol.records[i - 1].constraint_violation)

    def test_steps_respect_trust_region(self):
        problem = make_problem(ball_model(), num_steps=6)
        guess = np.zeros((7, 3))
        guess[1:, 1] = 0.15
        sol = solve(problem, guess, SolverOptions(max_iterations=40))
        for rec in sol.records[1:]:
            assert rec.step_norm <= rec.radius * (1 + 1e-12)

    def test_multiplier_mode_reduces_violation(self):
        problem = make_problem(ball_model(), num_steps=6, mode="lm")
        guess = np.zeros((7, 3))
        guess[1:, 1] = 0.15
        trace = []
        sol = solve(problem, guess, SolverOptions(max_iterations=120),
                    trace=trace)
        start = float(np.sum(unactuated_constraint(problem, guess) ** 2))
        end = sol.records[-1].constraint_violation
        assert end < 1e-6 * max(start, 1e-30)
        drops = [t for t in trace if t["accepted"]]
        assert drops
        assert all(t["merit_after"] < t["merit_before"] for t in drops)

    def test_trace_covers_every_iteration(self):
        problem = make_problem(cart_model(), num_steps=4)
        trace = []
        sol = solve(problem, np.zeros((5, 1)),
                    SolverOptions(max_iterations=7), trace=trace)
        assert [t["iteration"] for t in trace] == \
            [r.iteration for r in sol.records[1:]]

    def test_solution_quantities_consistent(self):
        problem = make_problem(ball_model(), num_steps=5)
        guess = np.zeros((6, 3))
        guess[1:, 1] = 0.2
        sol = solve(problem, guess, SolverOptions(max_iterations=30))
        from idto.problem import (trajectory_inverse_dynamics,
                                  velocities_from_positions)
        np.testing.assert_allclose(
            sol.velocities, velocities_from_positions(problem, sol.positions))
        tau, forces = trajectory_inverse_dynamics(problem, sol.positions)
        np.testing.assert_allclose(sol.torques, tau)
        np.testing.assert_allclose(sol.contact_forces, forces)

    def test_determinism_across_runs_and_workers(self):
        problem = make_problem(ball_model(), num_steps=6)
        guess = np.zeros((7, 3))
        guess[1:, 1] = 0.15
        runs = [solve(problem, guess.copy(),
                      SolverOptions(max_iterations=25, workers=w))
                for w in (1, 1, 3)]
        ref = runs[0].records
        for other in runs[1:]:
            assert len(other.records) == len(ref)
            for a, b in zip(ref, other.records):
                for field in ("iteration", "cost", "constraint_violation",
                              "grad_norm", "radius", "step_norm", "accepted"):
                    av, bv = getattr(a, field), getattr(b, field)
                    assert av == bv or (np.isnan(av) and np.isnan(bv)), field

    def test_radius_floor_termination(self):
        problem = make_problem(cart_model(), num_steps=4)
        sol = solve(problem, np.zeros((5, 1)),
                    SolverOptions(max_iterations=50, initial_radius=1e-11,
                                  radius_floor=1e-10))
        assert sol.termination == RADIUS_FLOOR

    def test_factorization_failure_falls_back_then_gives_up(self, monkeypatch):
        problem = make_problem(cart_model(), num_steps=4)
        monkeypatch.setattr(solver_mod, "factorize", lambda mat: None)
        sol = solve(problem, np.zeros((5, 1)),
                    SolverOptions(max_iterations=20))
        assert sol.termination == FACTORIZATION_EXHAUSTED

    def test_guess_shape_and_pin_enforced(self):
        problem = make_problem(cart_model(), num_steps=4)
        with pytest.raises(ValueError, match="shape"):
            solve(problem, np.zeros((3, 1)))
        bad = np.zeros((5, 1))
        bad[0, 0] = 0.7
        with pytest.raises(ValueError, match="pinned"):
            solve(problem, bad)


class TestMultipliers:
    def test_schur_solution_matches_dense_kkt(self):
        hess, grad = small_quadratic(seed=5, n=3, b=3)
        rng = np.random.default_rng(6)
        a_mat = rng.standard_normal((4, 9))
        h = rng.standard_normal(4)
        lam = lagrange_multipliers(factorize(hess), a_mat, grad, h)
        dense = hess.to_dense()
        p = -np.linalg.solve(dense, grad + a_mat.T @ lam)
        np.testing.assert_allclose(dense @ p + a_mat.T @ lam, -grad,
                                   atol=1e-10)
        np.testing.assert_allclose(a_mat @ p, -h, atol=1e-10)

    def test_empty_constraints_give_empty_multipliers(self):
        hess, grad = small_quadratic()
        lam = lagrange_multipliers(factorize(hess), np.zeros((0, 4)), grad,
                                   np.zeros(0))
        assert lam.size == 0

    def test_zero_data_gives_zero_multipliers(self):
        hess, _ = small_quadratic(seed=8)
        a_mat = np.random.default_rng(9).standard_normal((2, 4))
        lam = lagrange_multipliers(factorize(hess), a_mat, np.zeros(4),
                                   np.zeros(2))
        np.testing.assert_allclose(lam, 0.0, atol=1e-14)

    def test_single_constraint_identity_hessian_closed_form(self):
        eye = BlockPentaMatrix(np.eye(3)[None], np.zeros((0, 3, 3)),
                               np.zeros((0, 3, 3)))
        a_mat = np.array([[1.0, 2.0, -1.0]])
        g = np.array([0.3, -0.7, 0.2])
        h = np.array([0.9])
        lam = lagrange_multipliers(factorize(eye), a_mat, g, h)
        want = (h[0] - a_mat[0] @ g) / (a_mat[0] @ a_mat[0])
        assert lam[0] == pytest.approx(want, rel=1e-12)

    def test_rank_deficient_constraints_raise(self):
        hess, grad = small_quadratic(seed=7)
        a_mat = np.vstack([np.ones((1, 4)), np.ones((1, 4))])
        with pytest.raises(ValueError, match="rank deficient"):
            lagrange_multipliers(factorize(hess), a_mat, grad, np.ones(2))


class TestOptionsValidation:
    def test_threshold_range(self):
        with pytest.raises(ValueError, match="threshold"):
            SolverOptions(acceptance_threshold=0.3)

    def test_radius_ordering(self):
        with pytest.raises(ValueError, match="radius"):
            SolverOptions(initial_radius=5.0, max_radius=1.0)

    def test_positive_tolerances(self):
        with pytest.raises(ValueError, match="gradient_tol"):
            SolverOptions(gradient_tol=0.0)

    def test_negative_budget_rejected(self):
        with pytest.raises(ValueError, match="max_iterations"):
            SolverOptions(max_iterations=-1)
