"""Minimal planar rigid-body dynamics.

Models are kinematic trees of planar bodies connected by revolute, prismatic
or planar-free joints.  The planar restriction keeps the velocity/position
kinematic map equal to the identity (n_q == n_v), which the rest of the
library relies on.

Sign convention for the equations of motion:

    M(q) v_dot + k(q, v) = B u + J^T f

where k collects velocity-product terms, gravity and joint damping.

All operations broadcast over leading batch axes: ``q`` of shape
``(..., n_q)`` yields e.g. a mass matrix of shape ``(..., n_v, n_v)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .contact import CollisionPrimitive

REVOLUTE = "revolute"
PRISMATIC = "prismatic"
FREE = "free"

_JOINT_DOF = {REVOLUTE: 1, PRISMATIC: 1, FREE: 3}

WORLD = -1


@dataclass(frozen=True)
class Body:
    """A planar rigid body: mass, rotational inertia about the COM, and the
    COM offset expressed in the body frame."""

    mass: float
    inertia: float
    com: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.mass > 0.0:
            raise ValueError(f"body mass must be > 0, got {self.mass}")
        if not self.inertia > 0.0:
            raise ValueError(f"body inertia must be > 0, got {self.inertia}")


@dataclass(frozen=True)
class Joint:
    """Connects body i to ``parent`` (another body index, or WORLD == -1).

    The child frame is obtained from the parent frame by a translation
    ``origin`` (in the parent frame) followed by the joint motion:

      revolute   one angle q about the joint point
      prismatic  one displacement q along ``axis`` (unit, parent frame)
      free       (x, y, theta) relative to the parent frame

    ``damping`` applies a generalized force -damping * qdot on each of the
    joint's degrees of freedom.
    """

    kind: str
    parent: int
    origin: tuple[float, float] = (0.0, 0.0)
    axis: tuple[float, float] = (1.0, 0.0)
    damping: float = 0.0

    def __post_init__(self):
        if self.kind not in _JOINT_DOF:
            raise ValueError(f"unknown joint kind {self.kind!r}")
        if self.damping < 0.0:
            raise ValueError("joint damping must be >= 0")
        if self.kind == PRISMATIC:
            n = float(np.hypot(*self.axis))
            if abs(n - 1.0) > 1e-9:
                raise ValueError("prismatic axis must be unit length")

    @property
    def dof(self) -> int:
        return _JOINT_DOF[self.kind]


@dataclass(frozen=True)
class ModelTopology:
    """Immutable planar multibody description.

    Body i is attached to its parent by joints[i]; parents precede children
    (tree order).  ``actuated`` lists the actuated DoF indices, i.e. the
    selection matrix B.  ``collision`` and ``contact_pairs`` describe the
    collision primitives and which primitive couples may touch; they are
    consumed by the contact module.
    """

    bodies: tuple[Body, ...]
    joints: tuple[Joint, ...]
    actuated: tuple[int, ...]
    gravity: tuple[float, float] = (0.0, -9.81)
    collision: tuple["CollisionPrimitive", ...] = ()
    contact_pairs: tuple[tuple[int, int], ...] = ()
    dof_offsets: tuple[int, ...] = field(init=False)
    nq: int = field(init=False)

    def __post_init__(self):
        if len(self.bodies) != len(self.joints):
            raise ValueError("need exactly one joint per body")
        offsets, n = [], 0
        for i, joint in enumerate(self.joints):
            if not WORLD <= joint.parent < i:
                raise ValueError(f"joint {i} parent {joint.parent} breaks tree order")
            offsets.append(n)
            n += joint.dof
        object.__setattr__(self, "dof_offsets", tuple(offsets))
        object.__setattr__(self, "nq", n)
        if len(set(self.actuated)) != len(self.actuated):
            raise ValueError("actuated DoF indices must be unique")
        for idx in self.actuated:
            if not 0 <= idx < n:
                raise ValueError(f"actuated index {idx} out of range [0, {n})")
        for a, b in self.contact_pairs:
            if not (0 <= a < len(self.collision) and 0 <= b < len(self.collision)):
                raise ValueError(f"contact pair ({a}, {b}) references unknown primitive")

    @property
    def nv(self) -> int:
        # Planar models: the kinematic map N(q) is the identity.
        return self.nq

    @property
    def num_actuated(self) -> int:
        return len(self.actuated)

    @property
    def unactuated(self) -> np.ndarray:
        """Unactuated DoF indices as an integer array (safe for numpy
        fancy indexing even when empty)."""
        return np.array([i for i in range(self.nv) if i not in self.actuated],
                        dtype=int)

    def damping_vector(self) -> np.ndarray:
        d = np.zeros(self.nv)
        for joint, off in zip(self.joints, self.dof_offsets):
            d[off:off + joint.dof] = joint.damping
        return d

    def b_matrix(self) -> np.ndarray:
        """Actuation selection matrix B, shape (nv, num_actuated)."""
        B = np.zeros((self.nv, len(self.actuated)))
        for col, idx in enumerate(self.actuated):
            B[idx, col] = 1.0
        return B


@dataclass(frozen=True)
class State:
    """Generalized positions and velocities."""

    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if q.shape != v.shape:
            raise ValueError("q and v must have matching shapes")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
            raise ValueError("state entries must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "v", v)


class Kinematics(NamedTuple):
    """Forward-kinematics result for every body, batched like the input q.

    p, theta    body frame origin (..., nb, 2) and angle (..., nb)
    rot         frame rotation matrices (..., nb, 2, 2)
    jac_lin     d(frame origin velocity)/dv, (..., nb, 2, nv)
    jac_ang     d(frame angular velocity)/dv, (..., nb, nv)
    """

    p: np.ndarray
    theta: np.ndarray
    rot: np.ndarray
    jac_lin: np.ndarray
    jac_ang: np.ndarray


def _rot(theta: np.ndarray) -> np.ndarray:
    """Planar rotation matrices, shape theta.shape + (2, 2)."""
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def _perp(vec: np.ndarray) -> np.ndarray:
    """Rotate 2-vectors by +90 degrees (the planar 'cross' operator)."""
    return np.stack([-vec[..., 1], vec[..., 0]], -1)


def kinematics(model: ModelTopology, q: np.ndarray) -> Kinematics:
    """Frame poses and frame-origin Jacobians for all bodies."""
    q = np.asarray(q, dtype=float)
    batch = q.shape[:-1]
    nb, nv = len(model.bodies), model.nv
    p = np.zeros(batch + (nb, 2))
    theta = np.zeros(batch + (nb,))
    jl = np.zeros(batch + (nb, 2, nv))
    ja = np.zeros(batch + (nb, nv))

    for i, joint in enumerate(model.joints):
        off = model.dof_offsets[i]
        if joint.parent == WORLD:
            pp = np.zeros(batch + (2,))
            tp = np.zeros(batch)
            jlp = np.zeros(batch + (2, nv))
            jap = np.zeros(batch + (nv,))
        else:
            pp, tp = p[..., joint.parent, :], theta[..., joint.parent]
            jlp, jap = jl[..., joint.parent, :, :], ja[..., joint.parent, :]
        Rp = _rot(tp)
        origin = np.asarray(joint.origin)

        if joint.kind == REVOLUTE:
            u = np.broadcast_to(origin, batch + (2,))
            th = tp + q[..., off]
            jai = jap.copy()
            jai[..., off] += 1.0
            extra = np.zeros(batch + (2, nv))
        elif joint.kind == PRISMATIC:
            axis = np.asarray(joint.axis)
            u = origin + axis * q[..., off, None]
            th = tp
            jai = jap
            extra = np.zeros(batch + (2, nv))
            extra[..., :, off] = (Rp @ axis)
        else:  # FREE
            u = origin + q[..., off:off + 2]
            th = tp + q[..., off + 2]
            jai = jap.copy()
            jai[..., off + 2] += 1.0
            extra = np.zeros(batch + (2, nv))
            extra[..., :, off:off + 2] = Rp

        ru = np.einsum("...ij,...j->...i", Rp, u)
        p[..., i, :] = pp + ru
        theta[..., i] = th
        # frame-origin velocity: pdot_parent + omega_parent * perp(R u) + R udot
        jl[..., i, :, :] = jlp + _perp(ru)[..., :, None] * jap[..., None, :] + extra
        ja[..., i, :] = jai

    return Kinematics(p, theta, _rot(theta), jl, ja)


def _com_jacobians(model: ModelTopology, kin: Kinematics):
    """COM linear Jacobians (..., nb, 2, nv) and COM world positions."""
    coms = np.stack([np.asarray(b.com, dtype=float) for b in model.bodies])
    rc = np.einsum("...bij,bj->...bi", kin.rot, coms)
    jac = kin.jac_lin + _perp(rc)[..., :, None] * kin.jac_ang[..., None, :]
    return jac, kin.p + rc


def _bias_accelerations(model: ModelTopology, kin: Kinematics, v: np.ndarray):
    """Per-body frame velocity and bias acceleration (the acceleration when
    v_dot == 0), each (..., nb, 2) linear plus (..., nb) angular parts."""
    batch = v.shape[:-1]
    nb = len(model.bodies)
    pdot = np.zeros(batch + (nb, 2))
    omega = np.zeros(batch + (nb,))
    acc = np.zeros(batch + (nb, 2))
    omdot = np.zeros(batch + (nb,))

    for i, joint in enumerate(model.joints):
        off = model.dof_offsets[i]
        if joint.parent == WORLD:
            pdp = np.zeros(batch + (2,))
            omp = np.zeros(batch)
            accp = np.zeros(batch + (2,))
            omdp = np.zeros(batch)
            Rp = np.broadcast_to(np.eye(2), batch + (2, 2))
        else:
            pdp, omp = pdot[..., joint.parent, :], omega[..., joint.parent]
            accp, omdp = acc[..., joint.parent, :], omdot[..., joint.parent]
            Rp = _rot(kin.theta[..., joint.parent])
        origin = np.asarray(joint.origin)

        if joint.kind == REVOLUTE:
            u = np.broadcast_to(origin, batch + (2,))
            udot = np.zeros(batch + (2,))
            om = omp + v[..., off]
            omd = omdp
        elif joint.kind == PRISMATIC:
            axis = np.asarray(joint.axis)
            # need q at this joint; recover u from kinematics result instead
            u = np.einsum("...ji,...j->...i", Rp, kin.p[..., i, :] - _parent_p(kin, joint, batch))
            udot = axis * v[..., off, None]
            om = omp
            omd = omdp
        else:  # FREE
            u = np.einsum("...ji,...j->...i", Rp, kin.p[..., i, :] - _parent_p(kin, joint, batch))
            udot = v[..., off:off + 2]
            om = omp + v[..., off + 2]
            omd = omdp

        ru = np.einsum("...ij,...j->...i", Rp, u)
        rud = np.einsum("...ij,...j->...i", Rp, udot)
        pdot[..., i, :] = pdp + omp[..., None] * _perp(ru) + rud
        omega[..., i] = om
        acc[..., i, :] = (accp + omdp[..., None] * _perp(ru)
                          - omp[..., None] ** 2 * ru
                          + 2.0 * omp[..., None] * _perp(rud))
        omdot[..., i] = omd

    return pdot, omega, acc, omdot


def _parent_p(kin: Kinematics, joint: Joint, batch):
    if joint.parent == WORLD:
        return np.zeros(batch + (2,))
    return kin.p[..., joint.parent, :]


def mass_matrix(model: ModelTopology, q: np.ndarray, kin: Kinematics | None = None) -> np.ndarray:
    """Joint-space mass matrix M(q), symmetric positive definite."""
    q = _check_q(model, q)
    if kin is None:
        kin = kinematics(model, q)
    jc, _ = _com_jacobians(model, kin)
    m = np.array([b.mass for b in model.bodies])
    inertia = np.array([b.inertia for b in model.bodies])
    M = np.einsum("b,...bki,...bkj->...ij", m, jc, jc)
    M += np.einsum("b,...bi,...bj->...ij", inertia, kin.jac_ang, kin.jac_ang)
    return M


def bias_forces(model: ModelTopology, q: np.ndarray, v: np.ndarray,
                kin: Kinematics | None = None) -> np.ndarray:
    """Velocity-product, gravity and damping forces k(q, v).

    Unforced dynamics read M v_dot = -k, so gravity on a horizontal
    pendulum shows up with a positive sign."""
    q = _check_q(model, q)
    v = _check_q(model, v)
    if kin is None:
        kin = kinematics(model, q)
    jc, _ = _com_jacobians(model, kin)
    _, omega, acc, omdot = _bias_accelerations(model, kin, v)
    coms = np.stack([np.asarray(b.com, dtype=float) for b in model.bodies])
    rc = np.einsum("...bij,bj->...bi", kin.rot, coms)
    acc_com = (acc + omdot[..., None] * _perp(rc) - omega[..., None] ** 2 * rc)

    m = np.array([b.mass for b in model.bodies])
    inertia = np.array([b.inertia for b in model.bodies])
    g = np.asarray(model.gravity)
    k = np.einsum("...bki,b,...bk->...i", jc, m, acc_com - g)
    k += np.einsum("...bi,b,...b->...i", kin.jac_ang, inertia, omdot)
    return k + model.damping_vector() * v


def inverse_dynamics(model: ModelTopology, q: np.ndarray, v: np.ndarray, a: np.ndarray,
                     external_force: np.ndarray | None = None,
                     kin: Kinematics | None = None) -> np.ndarray:
    """Generalized forces tau = M(q) a + k(q, v) - external_force."""
    a = _check_q(model, a)
    if kin is None:
        kin = kinematics(model, _check_q(model, q))
    tau = np.einsum("...ij,...j->...i", mass_matrix(model, q, kin), a)
    tau += bias_forces(model, q, v, kin)
    if external_force is not None:
        tau = tau - external_force
    return tau


def forward_dynamics(model: ModelTopology, q: np.ndarray, v: np.ndarray,
                     applied_force: np.ndarray) -> np.ndarray:
    """Acceleration a = M(q)^{-1} (applied - k(q, v)); inverse of inverse_dynamics."""
    M = mass_matrix(model, q)
    rhs = applied_force - bias_forces(model, q, v)
    try:
        return np.linalg.solve(M, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular mass matrix; model is invalid") from exc


def kinetic_energy(model: ModelTopology, q: np.ndarray, v: np.ndarray) -> np.ndarray:
    M = mass_matrix(model, q)
    return 0.5 * np.einsum("...i,...ij,...j->...", v, M, v)


def potential_energy(model: ModelTopology, q: np.ndarray) -> np.ndarray:
    """Gravitational potential, zero at the world origin."""
    kin = kinematics(model, np.asarray(q, dtype=float))
    _, coms = _com_jacobians(model, kin)
    m = np.array([b.mass for b in model.bodies])
    g = np.asarray(model.gravity)
    return -np.einsum("b,...bi,i->...", m, coms, g)


def _check_q(model: ModelTopology, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != model.nq:
        raise ValueError(f"expected trailing dimension {model.nq}, got {q.shape}")
    return q
