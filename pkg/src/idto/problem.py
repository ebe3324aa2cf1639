"""Least-squares transcription of contact trajectory optimization.

Positions q_0..q_N are the only decision variables (q_0 is pinned to the
initial state and eliminated).  Velocities, accelerations, joint torques
and contact forces are derived quantities:

    v_k = (q_k - q_{k-1}) / dt                       (v_0 given)
    a_k = (v_{k+1} - v_k) / dt
    tau_k = M(q_{k+1}) a_k + c(q_{k+1}, v_{k+1}) - J^T(q_{k+1}) f_k

with every inverse-dynamics term evaluated at the end of the step.  The
cost is a first-order quadrature of tracking and effort terms,

    L = sum_k dt (0.5 |x_k - xbar_k|^2_Q + 0.5 |tau_k|^2_R)
        + 0.5 |x_N - xbar_N|^2_Qf

which is exactly 0.5 |r(q)|^2 for the stacked weighted residual, so the
Gauss-Newton machinery applies directly.  Torque rows on unactuated
joints either carry a large penalty weight or are constrained to zero
through multipliers, selected by ``constraint_mode``.

Derivatives of tau with respect to q use forward differences over the
three-knot stencil; everything else is analytic.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .contact import ContactParams, forces_from_geometry, pair_geometry
from .dynamics import ModelTopology, bias_forces, kinematics, mass_matrix

PENALTY = "penalty"
MULTIPLIERS = "lm"


@dataclass(frozen=True, eq=False)
class ProblemDefinition:
    """Trajectory problem data: model, horizon, weights and nominals.

    Weights are per-DoF diagonals.  ``weight_tau`` holds effort weights for
    actuated rows and must be zero on unactuated rows; what the unactuated
    rows actually carry is decided by the mode (``penalty_weight`` or zero).
    """

    model: ModelTopology
    contact: ContactParams
    num_steps: int
    dt: float
    q_init: np.ndarray
    v_init: np.ndarray
    q_nominal: np.ndarray
    v_nominal: np.ndarray
    weight_q: np.ndarray
    weight_v: np.ndarray
    weight_q_final: np.ndarray
    weight_v_final: np.ndarray
    weight_tau: np.ndarray
    constraint_mode: str = PENALTY
    penalty_weight: float = 1000.0

    def __post_init__(self):
        n = self.model.nq
        for name in ("q_init", "v_init", "q_nominal", "v_nominal", "weight_q",
                     "weight_v", "weight_q_final", "weight_v_final", "weight_tau"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.num_steps < 2:
            raise ValueError("horizon must have at least 2 steps")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.q_init.shape != (n,) or self.v_init.shape != (n,):
            raise ValueError("initial state has wrong dimension")
        want = (self.num_steps + 1, n)
        if self.q_nominal.shape != want or self.v_nominal.shape != want:
            raise ValueError(f"nominal trajectory must have shape {want}")
        for name in ("weight_q", "weight_v", "weight_q_final", "weight_v_final",
                     "weight_tau"):
            w = getattr(self, name)
            if w.shape != (n,):
                raise ValueError(f"{name} must have {n} entries")
            if np.any(w < 0):
                raise ValueError(f"{name} entries must be >= 0")
        if np.any(self.weight_tau[np.array(self.model.actuated, dtype=int)] <= 0):
            raise ValueError("weight_tau must be > 0 on actuated joints")
        if np.any(self.weight_tau[self.model.unactuated] != 0):
            raise ValueError("weight_tau must be 0 on unactuated joints; "
                             "those rows are governed by the constraint mode")
        if self.constraint_mode not in (PENALTY, MULTIPLIERS):
            raise ValueError(f"unknown constraint mode {self.constraint_mode!r}")
        if self.constraint_mode == PENALTY and not self.penalty_weight > 0:
            raise ValueError("penalty_weight must be > 0 in penalty mode")

    @property
    def nq(self) -> int:
        return self.model.nq

    def effective_torque_weight(self) -> np.ndarray:
        """Per-DoF effort weights after applying the constraint mode to
        unactuated rows."""
        w = self.weight_tau.copy()
        un = self.model.unactuated
        w[un] = self.penalty_weight if self.constraint_mode == PENALTY else 0.0
        return w


def velocities_from_positions(problem: ProblemDefinition, qs: np.ndarray) -> np.ndarray:
    """(N+1, nv) backward-difference velocities; row 0 is the given v_init."""
    qs = np.asarray(qs, dtype=float)
    vs = np.empty_like(qs)
    vs[0] = problem.v_init
    vs[1:] = np.diff(qs, axis=0) / problem.dt
    return vs


def accelerations_from_velocities(problem: ProblemDefinition, vs: np.ndarray) -> np.ndarray:
    """(N, nv) forward-difference accelerations a_k = (v_{k+1} - v_k)/dt."""
    return np.diff(np.asarray(vs, dtype=float), axis=0) / problem.dt


def _station_torques(problem: ProblemDefinition, q_st, v_st, a):
    """Inverse dynamics at a batch of stations: M(q) a + bias(q, v) - J^T f.

    Returns (tau, f) with f per-pair [normal, tangential] components;
    arbitrary leading batch axes."""
    model = problem.model
    kin = kinematics(model, q_st)
    m = mass_matrix(model, q_st, kin=kin)
    tau = np.einsum("...ij,...j->...i", m, a) + bias_forces(model, q_st, v_st, kin=kin)
    if model.contact_pairs:
        geom = pair_geometry(model, kin)
        f = forces_from_geometry(geom, v_st, problem.contact)
        tau -= np.einsum("...pij,...pi->...j", geom.jac, f)
    else:
        f = np.zeros(q_st.shape[:-1] + (0, 2))
    return tau, f


def trajectory_inverse_dynamics(problem: ProblemDefinition, qs: np.ndarray):
    """Torques (N, nv) and contact forces (N, P, 2) realizing the q sequence."""
    qs = np.asarray(qs, dtype=float)
    vs = velocities_from_positions(problem, qs)
    accel = accelerations_from_velocities(problem, vs)
    return _station_torques(problem, qs[1:], vs[1:], accel)


def total_cost(problem: ProblemDefinition, qs: np.ndarray) -> float:
    qs = np.asarray(qs, dtype=float)
    vs = velocities_from_positions(problem, qs)
    tau, _ = trajectory_inverse_dynamics(problem, qs)
    dq = qs - problem.q_nominal
    dv = vs - problem.v_nominal
    dt = problem.dt
    r_eff = problem.effective_torque_weight()
    run = dt * 0.5 * (np.sum(dq[:-1] ** 2 * problem.weight_q)
                      + np.sum(dv[:-1] ** 2 * problem.weight_v)
                      + np.sum(tau ** 2 * r_eff))
    fin = 0.5 * (np.sum(dq[-1] ** 2 * problem.weight_q_final)
                 + np.sum(dv[-1] ** 2 * problem.weight_v_final))
    return float(run + fin)


def residual(problem: ProblemDefinition, qs: np.ndarray) -> np.ndarray:
    """Weighted residual r with L = 0.5 |r|^2: state blocks for k = 0..N
    (terminal weights at N, dt quadrature elsewhere) followed by torque
    blocks for k = 0..N-1."""
    qs = np.asarray(qs, dtype=float)
    n1 = problem.num_steps + 1
    vs = velocities_from_positions(problem, qs)
    tau, _ = trajectory_inverse_dynamics(problem, qs)
    dt = problem.dt
    wq = np.tile(dt * problem.weight_q, (n1, 1))
    wv = np.tile(dt * problem.weight_v, (n1, 1))
    wq[-1] = problem.weight_q_final
    wv[-1] = problem.weight_v_final
    state = np.concatenate([np.sqrt(wq) * (qs - problem.q_nominal),
                            np.sqrt(wv) * (vs - problem.v_nominal)], axis=1)
    effort = np.sqrt(dt * problem.effective_torque_weight()) * tau
    return np.concatenate([state.ravel(), effort.ravel()])


def unactuated_constraint(problem: ProblemDefinition, qs: np.ndarray) -> np.ndarray:
    """Unactuated rows of tau, concatenated over steps; length N * (nv - nu)."""
    tau, _ = trajectory_inverse_dynamics(problem, qs)
    return tau[:, problem.model.unactuated].ravel()


@dataclass(frozen=True, eq=False)
class DerivativeCache:
    """Torque derivative blocks for each decision knot k = 1..N, stored at
    index u = k - 1:

    dtau_prev[u] = d tau_{k-1} / d q_k
    dtau_curr[u] = d tau_k     / d q_k   (zero block at u = N-1)
    dtau_next[u] = d tau_{k+1} / d q_k   (zero blocks at u >= N-2)

    Velocity blocks are the frozen constants d v_k / d q_k = I/dt and
    d v_{k+1} / d q_k = -I/dt; they are exposed as properties and used
    implicitly by the gradient and Hessian assembly.  ``positions`` keeps
    the q sequence the cache was built from so stale use can be rejected.
    """

    positions: np.ndarray
    torques: np.ndarray
    dtau_prev: np.ndarray
    dtau_curr: np.ndarray
    dtau_next: np.ndarray
    dt: float

    @property
    def dv_dq_same(self) -> np.ndarray:
        return np.eye(self.positions.shape[1]) / self.dt

    @property
    def dv_next_dq(self) -> np.ndarray:
        return -np.eye(self.positions.shape[1]) / self.dt

    def matches(self, qs: np.ndarray) -> bool:
        return self.positions.shape == qs.shape and np.array_equal(self.positions, qs)


def _eval_chunked(problem, q_st, v_st, a, workers):
    """Station torques over a flat batch, optionally split across threads.

    Chunks are contiguous slices of the leading axis and results are
    concatenated in order, so the arithmetic per sample is identical for
    any worker count."""
    if workers <= 1 or q_st.shape[0] < 2 * workers:
        return _station_torques(problem, q_st, v_st, a)[0]
    bounds = np.linspace(0, q_st.shape[0], workers + 1).astype(int)
    spans = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    with ThreadPoolExecutor(max_workers=len(spans)) as pool:
        parts = pool.map(
            lambda s: _station_torques(problem, q_st[s[0]:s[1]], v_st[s[0]:s[1]],
                                       a[s[0]:s[1]])[0], spans)
        return np.concatenate(list(parts), axis=0)


def fd_inverse_dynamics_derivatives(problem: ProblemDefinition, qs: np.ndarray,
                                    workers: int = 1) -> DerivativeCache:
    """Forward-difference torque derivatives over the three-knot stencil.

    Perturbing knot q_k touches tau_{k-1} (through its station position,
    velocity and acceleration), tau_k (velocity and acceleration only) and
    tau_{k+1} (acceleration only); each family is evaluated as one batched
    inverse-dynamics call over all knots and coordinates.  Step sizes are
    sqrt(machine epsilon) * max(1, |q_k,i|) per coordinate.
    """
    qs = np.asarray(qs, dtype=float)
    n = problem.num_steps
    nq = problem.nq
    dt = problem.dt
    vs = velocities_from_positions(problem, qs)
    accel = accelerations_from_velocities(problem, vs)
    st_q, st_v = qs[1:], vs[1:]
    tau0, _ = _station_torques(problem, st_q, st_v, accel)

    eps = np.sqrt(np.finfo(float).eps) * np.maximum(1.0, np.abs(qs[1:]))  # (n, nq)
    eye = np.eye(nq)
    step = eps[:, :, None] * eye  # (n, nq, nq); step[u, i] = eps e_i

    def flat(x):
        return x.reshape((-1,) + x.shape[2:])

    # tau_{k-1} at station k: position, velocity and acceleration all move
    qa = flat(st_q[:, None] + step)
    va = flat(st_v[:, None] + step / dt)
    aa = flat(accel[:, None] + step / dt ** 2)
    ta = _eval_chunked(problem, qa, va, aa, workers).reshape(n, nq, nq)
    dtau_prev = (ta - tau0[:, None]).transpose(0, 2, 1) / eps[:, None, :]

    dtau_curr = np.zeros((n, nq, nq))
    if n >= 2:
        qb = flat(np.broadcast_to(st_q[1:, None], (n - 1, nq, nq)).copy())
        vb = flat(st_v[1:, None] - step[:-1] / dt)
        ab = flat(accel[1:, None] - 2.0 * step[:-1] / dt ** 2)
        tb = _eval_chunked(problem, qb, vb, ab, workers).reshape(n - 1, nq, nq)
        dtau_curr[:-1] = (tb - tau0[1:, None]).transpose(0, 2, 1) / eps[:-1, None, :]

    dtau_next = np.zeros((n, nq, nq))
    if n >= 3:
        qc = flat(np.broadcast_to(st_q[2:, None], (n - 2, nq, nq)).copy())
        vc = flat(np.broadcast_to(st_v[2:, None], (n - 2, nq, nq)).copy())
        ac = flat(accel[2:, None] + step[:-2] / dt ** 2)
        tc = _eval_chunked(problem, qc, vc, ac, workers).reshape(n - 2, nq, nq)
        dtau_next[:-2] = (tc - tau0[2:, None]).transpose(0, 2, 1) / eps[:-2, None, :]

    return DerivativeCache(positions=qs.copy(), torques=tau0,
                           dtau_prev=dtau_prev, dtau_curr=dtau_curr,
                           dtau_next=dtau_next, dt=dt)


def _state_weights(problem: ProblemDefinition):
    """Quadrature-folded diagonal weights for knots 1..N: (wq[u], wv[u])
    where u indexes decision knots and the last row carries the terminal
    weights (no dt factor)."""
    n = problem.num_steps
    wq = np.tile(problem.dt * problem.weight_q, (n, 1))
    wv = np.tile(problem.dt * problem.weight_v, (n, 1))
    wq[-1] = problem.weight_q_final
    wv[-1] = problem.weight_v_final
    return wq, wv


def cost_gradient(problem: ProblemDefinition, cache: DerivativeCache,
                  qs: np.ndarray) -> np.ndarray:
    """Gradient of total_cost over decision knots q_1..q_N, flat (N*nq,)."""
    qs = np.asarray(qs, dtype=float)
    if not cache.matches(qs):
        raise ValueError("derivative cache is stale: rebuild it for these positions")
    n = problem.num_steps
    dt = problem.dt
    vs = velocities_from_positions(problem, qs)
    dq = (qs - problem.q_nominal)[1:]
    dv = (vs - problem.v_nominal)[1:]
    wq, wv = _state_weights(problem)

    g = wq * dq + (wv * dv) / dt
    g[:-1] -= (wv[1:] * dv[1:]) / dt

    r_eff = problem.effective_torque_weight()
    wt = np.zeros((n + 2, problem.nq))
    wt[:n] = dt * r_eff * cache.torques
    g += np.einsum("uji,uj->ui", cache.dtau_prev, wt[:n])
    g += np.einsum("uji,uj->ui", cache.dtau_curr, wt[1:n + 1])
    g += np.einsum("uji,uj->ui", cache.dtau_next, wt[2:n + 2])
    return g.ravel()


def gauss_newton_hessian(problem: ProblemDefinition, cache: DerivativeCache):
    """Block-pentadiagonal Gauss-Newton Hessian over decision knots.

    Curvature from the torque residuals keeps only products of first
    derivatives; the state tracking terms are exactly quadratic, so their
    contribution is exact.  Blocks couple each knot to at most two
    neighbors because tau has a three-knot stencil.
    """
    from .banded import BlockPentaMatrix

    n = problem.num_steps
    nq = problem.nq
    dt = problem.dt
    wq, wv = _state_weights(problem)
    r_eff = dt * problem.effective_torque_weight()

    dp, dc, dn = cache.dtau_prev, cache.dtau_curr, cache.dtau_next
    rdp = r_eff[None, :, None] * dp
    rdc = r_eff[None, :, None] * dc
    rdn = r_eff[None, :, None] * dn

    diag = np.zeros((n, nq, nq))
    idx = np.arange(nq)
    diag[:, idx, idx] = wq + wv / dt ** 2
    diag[:-1, idx, idx] += wv[1:] / dt ** 2
    diag += np.einsum("uji,ujl->uil", dp, rdp)
    diag += np.einsum("uji,ujl->uil", dc, rdc)
    diag += np.einsum("uji,ujl->uil", dn, rdn)

    sub1 = np.zeros((max(n - 1, 0), nq, nq))
    sub1[:, idx, idx] = -wv[1:] / dt ** 2
    sub1 += np.einsum("uji,ujl->uil", dp[1:], rdc[:-1])
    sub1 += np.einsum("uji,ujl->uil", dc[1:], rdn[:-1])

    sub2 = np.einsum("uji,ujl->uil", dp[2:], rdn[:-2]) if n > 2 \
        else np.zeros((0, nq, nq))
    return BlockPentaMatrix(diag, sub1, sub2)


def unactuated_constraint_jacobian(problem: ProblemDefinition,
                                   cache: DerivativeCache) -> np.ndarray:
    """Dense Jacobian of unactuated_constraint over decision knots,
    shape (N * n_un, N * nq); built by scattering the cached blocks."""
    n = problem.num_steps
    nq = problem.nq
    un = problem.model.unactuated
    nu = len(un)
    a = np.zeros((n * nu, n * nq))
    for k in range(n):
        rows = slice(k * nu, (k + 1) * nu)
        a[rows, k * nq:(k + 1) * nq] = cache.dtau_prev[k][un]
        if k >= 1:
            a[rows, (k - 1) * nq:k * nq] = cache.dtau_curr[k - 1][un]
        if k >= 2:
            a[rows, (k - 2) * nq:(k - 1) * nq] = cache.dtau_next[k - 2][un]
    return a
