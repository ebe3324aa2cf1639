"""Self-check battery run by ``idto check``.

Each check compares a fast production code path against a slow but
independently constructed reference on the scenario's own model, so a
passing table means the optimizer's derivatives, linear algebra, and
contact model are consistent for that scenario specifically, not just for
whatever models the test suite happens to use.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .banded import factorize
from .contact import compliance_force, dissipation_factor, friction_force
from .dynamics import forward_dynamics, inverse_dynamics
from .problem import (cost_gradient, fd_inverse_dynamics_derivatives,
                      gauss_newton_hessian, residual, total_cost)


def _rng(seed=0):
    return np.random.default_rng(seed)


def _perturbed_guess(scenario, rng, scale=0.1):
    guess = scenario.initial_guess()
    guess[1:] += scale * rng.standard_normal(guess[1:].shape)
    return guess


def _truncated(problem, num_steps):
    k = num_steps + 1
    return replace(problem, num_steps=num_steps,
                   q_nominal=problem.q_nominal[:k].copy(),
                   v_nominal=problem.v_nominal[:k].copy())


def check_gradient(scenario, trajectories=3, tol=1e-4):
    """Assembled cost gradient against central differences of the cost."""
    problem = _truncated(scenario.problem, min(scenario.problem.num_steps, 10))
    rng = _rng(1)
    worst = 0.0
    for _ in range(trajectories):
        qs = _perturbed_guess(scenario, rng)[:problem.num_steps + 1]
        cache = fd_inverse_dynamics_derivatives(problem, qs)
        grad = cost_gradient(problem, cache, qs)
        fd = np.zeros_like(grad)
        flat = qs[1:].copy()
        eps = 1e-6

        def cost_at(i, delta):
            probe = flat.copy().ravel()
            probe[i] += delta
            return total_cost(problem,
                              np.vstack([qs[:1], probe.reshape(flat.shape)]))

        for i in range(flat.size):
            fd[i] = (cost_at(i, eps) - cost_at(i, -eps)) / (2 * eps)
        denom = max(np.linalg.norm(fd), 1e-12)
        worst = max(worst, np.linalg.norm(grad - fd) / denom)
    return ("gradient vs central differences", worst < tol,
            f"max relative error {worst:.2e} (tol {tol:.0e})")


def check_hessian(scenario, tol=1e-5):
    """Banded Gauss-Newton assembly against a dense J^T J from the residual."""
    problem = _truncated(scenario.problem, 3)
    rng = _rng(2)
    qs = _perturbed_guess(scenario, rng)[:problem.num_steps + 1]
    cache = fd_inverse_dynamics_derivatives(problem, qs)
    banded = gauss_newton_hessian(problem, cache).to_dense()

    base = residual(problem, qs)
    flat = qs[1:].copy()
    jac = np.zeros((base.size, flat.size))
    eps = 1e-6

    def res_at(i, delta):
        probe = flat.copy().ravel()
        probe[i] += delta
        return residual(problem, np.vstack([qs[:1],
                                            probe.reshape(flat.shape)]))

    for i in range(flat.size):
        jac[:, i] = (res_at(i, eps) - res_at(i, -eps)) / (2 * eps)
    dense = jac.T @ jac
    err = np.linalg.norm(banded - dense) / max(np.linalg.norm(dense), 1e-12)
    return ("Gauss-Newton Hessian vs dense residual Jacobian", err < tol,
            f"relative error {err:.2e} (tol {tol:.0e})")


def check_banded_solve(scenario, tol_backward=1e-12):
    """Block-banded Cholesky solve on the scenario's own Hessian.

    Scenario Hessians can be very ill conditioned (stiff contact against
    weakly weighted coordinates), where no solver reproduces another to a
    fixed tolerance.  The stable-algorithm property is small backward
    error; agreement with a dense solve is then checked only up to what
    the conditioning permits.
    """
    problem = _truncated(scenario.problem, min(scenario.problem.num_steps, 10))
    rng = _rng(3)
    qs = _perturbed_guess(scenario, rng)[:problem.num_steps + 1]
    cache = fd_inverse_dynamics_derivatives(problem, qs)
    hess = gauss_newton_hessian(problem, cache)
    fact = factorize(hess)
    if fact is None:
        return ("banded Cholesky vs dense solve", False,
                "factorization failed on the scenario Hessian")
    rhs = rng.standard_normal(hess.shape[0])
    x = fact.solve(rhs)
    dense = hess.to_dense()
    backward = (np.linalg.norm(dense @ x - rhs)
                / (np.linalg.norm(dense) * np.linalg.norm(x)
                   + np.linalg.norm(rhs)))
    cond = float(np.linalg.cond(dense))
    ref = np.linalg.solve(dense, rhs)
    agree = np.linalg.norm(x - ref) / max(np.linalg.norm(ref), 1e-12)
    allowed = max(1e-10, 100.0 * np.finfo(float).eps * cond)
    ok = backward < tol_backward and agree < allowed
    return ("banded Cholesky vs dense solve", ok,
            f"backward error {backward:.2e} (tol {tol_backward:.0e}), "
            f"dense agreement {agree:.2e} at condition {cond:.1e} "
            f"(allowed {allowed:.1e})")


def check_contact_model(scenario, samples=2000):
    """Force-law sanity on the planner contact parameters.

    Checks the closed-form value at zero distance, first-derivative
    continuity of the dissipation factor at its two break points, the
    friction-cone bound with dissipativity, and overflow safety for deep
    penetration.
    """
    p = scenario.planner_contact
    sigma, k = p.smoothing, p.stiffness
    msgs = []
    ok = True

    expected = sigma * k * np.log(2.0)
    got = compliance_force(np.array(0.0), p)
    if not np.isclose(got, expected, rtol=0, atol=1e-12 * max(1.0, expected)):
        ok = False
        msgs.append(f"compliance at zero distance {got!r} != {expected!r}")

    vd = p.dissipation_velocity
    eps = 1e-7
    for point in (0.0, 2.0 * vd):
        lo = (dissipation_factor(np.array(point), p)
              - dissipation_factor(np.array(point - eps), p)) / eps
        hi = (dissipation_factor(np.array(point + eps), p)
              - dissipation_factor(np.array(point), p)) / eps
        if abs(hi - lo) > 1e-5:
            ok = False
            msgs.append(f"dissipation slope jump {abs(hi - lo):.2e} at "
                        f"v_n = {point}")

    rng = _rng(4)
    phi = rng.uniform(-5 * sigma, 20 * sigma, samples)
    v_n = rng.uniform(-3 * vd, 3 * vd, samples)
    v_t = rng.uniform(-2.0, 2.0, samples)
    f_n = compliance_force(phi, p) * dissipation_factor(v_n, p)
    f_t = friction_force(v_t[:, None], f_n, p)[:, 0]
    if not np.all(np.abs(f_t) <= p.friction * f_n + 1e-12):
        ok = False
        msgs.append("friction cone violated")
    if not np.all(f_t * v_t <= 1e-12):
        ok = False
        msgs.append("friction not dissipative")

    deep = compliance_force(np.array(-1e6 * sigma), p)
    if not np.isfinite(deep):
        ok = False
        msgs.append("overflow at deep penetration")

    detail = "; ".join(msgs) if msgs else (
        f"value at contact, C1 break points, {samples} cone samples, "
        f"deep-penetration guard")
    return ("contact force model", ok, detail)


def check_dynamics_round_trip(scenario, samples=20, tol=1e-9):
    """forward_dynamics and inverse_dynamics must be mutual inverses."""
    model = scenario.model
    rng = _rng(5)
    worst = 0.0
    for _ in range(samples):
        q = scenario.problem.q_init + 0.3 * rng.standard_normal(model.nv)
        v = rng.standard_normal(model.nv)
        tau = rng.standard_normal(model.nv)
        a = forward_dynamics(model, q, v, tau)
        back = inverse_dynamics(model, q, v, a)
        worst = max(worst, float(np.max(np.abs(back - tau))))
    return ("inverse/forward dynamics round trip", worst < tol,
            f"max torque mismatch {worst:.2e} (tol {tol:.0e})")


def run_checks(scenario):
    """All checks as (name, passed, detail) rows."""
    return [
        check_gradient(scenario),
        check_hessian(scenario),
        check_banded_solve(scenario),
        check_contact_model(scenario),
        check_dynamics_round_trip(scenario),
    ]
