"""Gauss-Newton trust-region solver with dogleg steps.

The quadratic model at each incumbent trajectory uses the banded
Gauss-Newton Hessian and a diagonal scaling D = diag(H)^(-1/4); the
trust region bounds the scaled step, |D^-1 p| <= radius.  Underactuation
is handled either by the penalty weights already folded into the cost or
by Lagrange multipliers: lambda solves the Schur system built from
banded solves against the constraint Jacobian, the model gradient becomes
g + A^T lambda, and step acceptance is judged on the merit L + h^T lambda
with lambda frozen for the iteration.

Control flow notes:
  - record index 0 always describes the initial point (no step), so a run
    with zero iterations still produces a log;
  - a failed Cholesky pivot is not fatal: the radius shrinks by 4 and a
    scaled gradient step is taken, up to 5 consecutive times;
  - rejected steps never modify the trajectory and skip the derivative
    refresh entirely.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .banded import BlockFactorization, BlockPentaMatrix, factorize
from .problem import (MULTIPLIERS, ProblemDefinition, cost_gradient,
                      fd_inverse_dynamics_derivatives, gauss_newton_hessian,
                      total_cost, trajectory_inverse_dynamics,
                      unactuated_constraint, unactuated_constraint_jacobian,
                      velocities_from_positions)

FULL_NEWTON = "full-newton"
DOGLEG = "dogleg-interpolation"
CAUCHY = "scaled-cauchy"

CONVERGED = "converged"
MAX_ITERATIONS = "max-iterations"
RADIUS_FLOOR = "trust-radius-floor"
FACTORIZATION_EXHAUSTED = "factorization-failure-exhausted"


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 100
    initial_radius: float = 0.1
    max_radius: float = 100.0
    acceptance_threshold: float = 0.0
    cost_decrease_tol: float = 1e-8
    gradient_tol: float = 1e-10
    radius_floor: float = 1e-12
    scaling: bool = True
    workers: int = 1

    def __post_init__(self):
        if not 0.0 <= self.acceptance_threshold < 0.25:
            raise ValueError("acceptance threshold must be in [0, 1/4)")
        if not 0.0 < self.initial_radius <= self.max_radius:
            raise ValueError("initial radius must be in (0, max_radius]")
        for name in ("cost_decrease_tol", "gradient_tol", "radius_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    cost: float
    constraint_violation: float
    grad_norm: float
    radius: float
    step_norm: float
    rho: float
    accepted: bool
    wall_ms: float

    FIELDS = ("iteration", "cost", "constraint_violation", "grad_norm",
              "radius", "step_norm", "rho", "accepted", "wall_ms")


@dataclass(frozen=True, eq=False)
class Solution:
    positions: np.ndarray
    velocities: np.ndarray
    torques: np.ndarray
    contact_forces: np.ndarray
    records: list[IterationRecord]
    termination: str
    final_radius: float

    @property
    def accepted_steps(self) -> int:
        return sum(r.accepted for r in self.records[1:])


def scaling_matrix(hessian: BlockPentaMatrix, enabled: bool = True) -> np.ndarray:
    """Diagonal of D with D_ii = H_ii^(-1/4), or ones when disabled."""
    d = hessian.diagonal()
    if enabled and np.any(d <= 0):
        raise ValueError("Hessian diagonal must be positive for scaling")
    return d ** -0.25 if enabled else np.ones_like(d)


def _cauchy_step(gradient, hessian, scaling, radius):
    """Minimizer of the scaled quadratic model along -D^2 g, clipped to the
    radius; returns (step, scaled norm)."""
    gt = scaling * gradient
    gnorm = np.linalg.norm(gt)
    if gnorm == 0.0:
        return np.zeros_like(gradient), 0.0
    dg = scaling * gt
    curv = dg @ hessian.matvec(dg)
    if curv <= 0.0:
        length = radius
    else:
        length = min(radius, gnorm ** 3 / curv)
    return scaling * (-(length / gnorm) * gt), length


def dogleg_step(gradient, hessian: BlockPentaMatrix, fact: BlockFactorization,
                scaling: np.ndarray, radius: float):
    """Approximate trust-region subproblem solution in scaled variables.

    Returns (step p, |D^-1 p|, tag).  The full Newton step is returned
    whenever it fits inside the region; otherwise the step lies on the
    boundary, either along the scaled steepest descent direction or on the
    segment joining the Cauchy and Newton points.
    """
    p_newton = -fact.solve(gradient)
    pt_b = p_newton / scaling
    nb = float(np.linalg.norm(pt_b))
    if nb <= radius:
        return p_newton, nb, FULL_NEWTON

    gt = scaling * gradient
    gnorm2 = float(gt @ gt)
    dg = scaling * gt
    curv = float(dg @ hessian.matvec(dg))
    if curv <= 0.0:
        return scaling * (-(radius / np.sqrt(gnorm2)) * gt), radius, CAUCHY
    alpha = gnorm2 / curv
    nu = alpha * np.sqrt(gnorm2)
    if nu >= radius:
        return scaling * (-(radius / np.sqrt(gnorm2)) * gt), radius, CAUCHY

    pt_u = -alpha * gt
    w = pt_b - pt_u
    a = float(w @ w)
    b = float(pt_u @ w)
    c = nu ** 2 - radius ** 2
    s = (-b + np.sqrt(b * b - a * c)) / a
    return scaling * (pt_u + s * w), radius, DOGLEG


def trust_ratio_and_update(cost_old: float, cost_new: float, predicted: float,
                           radius: float, at_boundary: bool,
                           options: SolverOptions):
    """Ratio of actual to predicted decrease and the adapted radius.

    Returns (accept, rho, new_radius): shrink by 4 below 1/4, grow by 2 up
    to the cap when above 3/4 on a boundary step, accept when rho exceeds
    the threshold."""
    rho = (cost_old - cost_new) / predicted
    if rho < 0.25:
        new_radius = 0.25 * radius
    elif rho > 0.75 and at_boundary:
        new_radius = min(2.0 * radius, options.max_radius)
    else:
        new_radius = radius
    return rho > options.acceptance_threshold, rho, new_radius


def lagrange_multipliers(fact: BlockFactorization, a_mat: np.ndarray,
                         gradient: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Multipliers from the Schur complement of the equality-constrained
    quadratic model: (A H^-1 A^T) lambda = h - A H^-1 g."""
    if h.size == 0:
        return np.zeros(0)
    hi_at = fact.solve_multi(a_mat.T)
    hi_g = fact.solve(gradient)
    schur = a_mat @ hi_at
    try:
        factor = cho_factor(schur)
    except np.linalg.LinAlgError as exc:
        raise ValueError("constraint Schur matrix is not positive definite; "
                         "unactuated constraint rows are rank deficient") from exc
    return cho_solve(factor, h - a_mat @ hi_g)


class _Incumbent:
    """Derivative state at the current trajectory."""

    __slots__ = ("cache", "gradient", "h", "hessian", "fact", "a_mat")

    def __init__(self, problem, qs, workers, need_constraints):
        self.cache = fd_inverse_dynamics_derivatives(problem, qs, workers)
        self.gradient = cost_gradient(problem, self.cache, qs)
        un = problem.model.unactuated
        self.h = self.cache.torques[:, un].ravel()
        self.hessian = gauss_newton_hessian(problem, self.cache)
        self.fact = factorize(self.hessian)
        self.a_mat = (unactuated_constraint_jacobian(problem, self.cache)
                      if need_constraints else None)


def solve(problem: ProblemDefinition, initial_guess: np.ndarray,
          options: SolverOptions | None = None,
          trace: list | None = None) -> Solution:
    """Minimize the trajectory cost from the given q sequence.

    In multiplier mode the unactuated torque rows are driven toward zero
    through the merit function; in penalty mode they are simply part of
    the (penalized) cost and the loop is plain unconstrained Gauss-Newton.

    ``trace``, when given a list, receives one dict per iteration with the
    merit value before and after the candidate step (equal to the cost in
    penalty mode) under that iteration's frozen multipliers.  It exists so
    tests can check merit monotonicity, which the per-iteration records
    cannot express once the multipliers are refreshed.
    """
    if options is None:
        options = SolverOptions()
    qs = np.array(initial_guess, dtype=float)
    n = problem.num_steps
    if qs.shape != (n + 1, problem.nq):
        raise ValueError(f"initial guess must have shape {(n + 1, problem.nq)}")
    if not np.array_equal(qs[0], problem.q_init):
        raise ValueError("initial guess must start at the pinned initial position")

    use_lm = problem.constraint_mode == MULTIPLIERS
    radius = options.initial_radius
    records: list[IterationRecord] = []
    lam = np.zeros(n * len(problem.model.unactuated))

    t0 = time.perf_counter()
    cost = total_cost(problem, qs)
    inc = _Incumbent(problem, qs, options.workers, use_lm)

    def model_gradient():
        if use_lm and inc.a_mat is not None and lam.size:
            return inc.gradient + inc.a_mat.T @ lam
        return inc.gradient

    if use_lm and inc.fact is not None and lam.size:
        lam = lagrange_multipliers(inc.fact, inc.a_mat, inc.gradient, inc.h)
    g_model = model_gradient()
    merit = cost + lam @ inc.h if use_lm else cost
    viol = float(inc.h @ inc.h)
    records.append(IterationRecord(
        iteration=0, cost=cost, constraint_violation=viol,
        grad_norm=float(np.max(np.abs(g_model), initial=0.0)),
        radius=radius, step_norm=0.0, rho=float("nan"), accepted=True,
        wall_ms=(time.perf_counter() - t0) * 1e3))

    termination = MAX_ITERATIONS
    fact_failures = 0

    for it in range(1, options.max_iterations + 1):
        t_it = time.perf_counter()
        if np.max(np.abs(g_model), initial=0.0) < options.gradient_tol:
            termination = CONVERGED
            break
        if radius < options.radius_floor:
            termination = RADIUS_FLOOR
            break

        if inc.fact is None:
            fact_failures += 1
            if fact_failures > 5:
                termination = FACTORIZATION_EXHAUSTED
                break
            radius *= 0.25
            d = scaling_matrix(inc.hessian, options.scaling)
            p, step_norm = _cauchy_step(g_model, inc.hessian, d, radius)
        else:
            fact_failures = 0
            d = scaling_matrix(inc.hessian, options.scaling)
            p, step_norm, _ = dogleg_step(g_model, inc.hessian, inc.fact, d, radius)

        radius_used = radius
        predicted = -(g_model @ p + 0.5 * (p @ inc.hessian.matvec(p)))
        converged_now = False
        merit_before, merit_after = merit, float("nan")
        if predicted <= 0.0:
            accepted, rho = False, float("nan")
            radius = 0.25 * radius
        else:
            q_cand = qs.copy()
            q_cand[1:] += p.reshape(n, problem.nq)
            cost_cand = total_cost(problem, q_cand)
            if use_lm:
                merit_cand = cost_cand + lam @ unactuated_constraint(problem, q_cand)
            else:
                merit_cand = cost_cand
            at_boundary = step_norm >= radius_used * (1.0 - 1e-9)
            merit_after = merit_cand
            accepted, rho, radius = trust_ratio_and_update(
                merit, merit_cand, predicted, radius_used, at_boundary, options)
            if accepted:
                rel_drop = (merit - merit_cand) / max(1.0, abs(merit))
                qs, cost = q_cand, cost_cand
                inc = _Incumbent(problem, qs, options.workers, use_lm)
                if use_lm and inc.fact is not None and lam.size:
                    lam = lagrange_multipliers(inc.fact, inc.a_mat, inc.gradient, inc.h)
                g_model = model_gradient()
                merit = cost + lam @ inc.h if use_lm else cost
                viol = float(inc.h @ inc.h)
                if rel_drop < options.cost_decrease_tol:
                    converged_now = True

        if trace is not None:
            trace.append({"iteration": it, "merit_before": float(merit_before),
                          "merit_after": float(merit_after),
                          "predicted": float(predicted),
                          "accepted": bool(accepted)})
        records.append(IterationRecord(
            iteration=it, cost=cost, constraint_violation=viol,
            grad_norm=float(np.max(np.abs(g_model), initial=0.0)),
            radius=radius_used, step_norm=float(step_norm), rho=float(rho),
            accepted=bool(accepted),
            wall_ms=(time.perf_counter() - t_it) * 1e3))
        if converged_now:
            termination = CONVERGED
            break

    vs = velocities_from_positions(problem, qs)
    tau, forces = trajectory_inverse_dynamics(problem, qs)
    return Solution(positions=qs, velocities=vs, torques=tau,
                    contact_forces=forces, records=records,
                    termination=termination, final_radius=radius)
