"""Scenario files: one YAML document describing a planar model, contact
parameters, the trajectory optimization problem, solver budget, and an
optional closed-loop MPC episode.

A scenario parses to a fully validated in-memory configuration or fails
with an error anchored to the offending field (or the YAML line, for
syntax errors).  Unknown keys are rejected everywhere.  Keys carry units
in their names where a single unit applies; generalized-coordinate
vectors are SI per degree of freedom (rad for revolute, m for prismatic,
(m, m, rad) for free joints).

Top-level sections::

    name: spinner                     # required
    description: free text            # optional

    model:
      gravity_m_per_s2: [0.0, -9.81]
      bodies:                         # tree order, parents first
        - {name: arm, mass_kg: 1.0, inertia_kg_m2: 0.08, com_m: [0.5, 0]}
      joints:                         # exactly one per body
        - {name: shoulder, type: revolute, parent: world, child: arm,
           origin_m: [0, 1.4], damping: 0.1}
        # prismatic joints also take: axis: [0, 1]   (unit, parent frame)
        # damping units are joint-dependent (N*m*s/rad or N*s/m)
      actuated_joints: [shoulder]
      collision:
        - {name: tip, kind: sphere, body: arm, offset_m: [1, 0],
           radius_m: 0.025}
        - {name: ground, kind: halfspace, body: world, offset_m: [0, 0],
           normal: [0, 1]}
      contact_pairs:
        - [tip, ground]

    planner_contact:                  # compliant-force parameters the
      stiffness_n_per_m: 200.0        # optimizer differentiates through
      smoothing_m: 0.01
      friction_coefficient: 0.5
      stiction_velocity_m_per_s: 0.05
      dissipation_velocity_m_per_s: 0.1

    simulator_contact: {...}          # optional, defaults to planner values

    problem:
      num_steps: 40
      time_step_s: 0.05
      initial_position: [...]         # one entry per DoF
      initial_velocity: [...]
      weight_position: [...]          # running-cost diagonals
      weight_velocity: [...]
      weight_position_final: [...]    # terminal-cost diagonals
      weight_velocity_final: [...]
      weight_torque: [...]            # actuated entries > 0, unactuated 0
      constraint_mode: penalty        # or lm
      penalty_weight: 1000.0
      initial_guess: hold             # or nominal
      nominal:
        kind: ramp                    # constant | ramp | knots
        # constant: position [...], velocity [...] (default zeros)
        # ramp:     end_position [...], start_position (default initial);
        #           velocity is the constant ramp rate
        # knots:    times_s [...], positions [[...], ...],
        #           velocities optional (default: finite differences)

    solver:                           # optional, defaults shown
      max_iterations: 100
      initial_radius: 0.1
      max_radius: 100.0
      acceptance_threshold: 0.0
      cost_decrease_tol: 1.0e-8
      gradient_tol: 1.0e-10
      radius_floor: 1.0e-12
      scaling: true

    simulator:                        # optional
      time_step_s: 0.005              # default time_step_s / 10

    mpc:                              # optional; required by `idto mpc`
      replan_period_s: 0.05
      episode_seconds: 10.0
      iterations_per_replan: 1
      assume_zero_unactuated_velocity: false
      gains: {kp: [...], kd: [...]}   # per actuated DoF (scalars broadcast)
      goal: {kind: fixed}             # or {kind: advance-dof, dof: i,
                                      #     delta: x}
      disturbances:
        - {time_s: 5.0, dof: 2, delta_velocity: -5.0}

``load``/``loads`` return a :class:`Scenario`; ``serialize``/``dumps`` emit
a canonical form whose re-parse is semantically identical.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from .contact import CollisionPrimitive, ContactParams, HALFSPACE, SPHERE
from .dynamics import (Body, FREE, Joint, ModelTopology, PRISMATIC, REVOLUTE,
                       WORLD)
from .mpc import (Disturbance, GOAL_ADVANCE, GOAL_FIXED, GoalRule, MpcConfig,
                  SimulatorConfig, TrackingGains)
from .problem import MULTIPLIERS, PENALTY, ProblemDefinition
from .solver import SolverOptions

GUESS_HOLD = "hold"
GUESS_NOMINAL = "nominal"

_JOINT_TYPES = (REVOLUTE, PRISMATIC, FREE)
_FREE_SUFFIXES = ("_x", "_y", "_theta")


class ScenarioError(ValueError):
    """Raised when a scenario file fails to parse or validate."""


# ---------------------------------------------------------------------------
# typed field extraction
#
# Each section is consumed by popping known keys off a copy of the mapping;
# whatever remains is an unknown key and is reported with its full path.

def _expect_map(node, path):
    if not isinstance(node, dict):
        raise ScenarioError(f"{path}: expected a mapping, got {type(node).__name__}")
    return dict(node)


def _expect_list(node, path):
    if not isinstance(node, list):
        raise ScenarioError(f"{path}: expected a list, got {type(node).__name__}")
    return node


def _reject_unknown(leftover, path):
    if leftover:
        keys = ", ".join(sorted(str(k) for k in leftover))
        raise ScenarioError(f"{path}: unknown key(s): {keys}")


_MISSING = object()


def _pop(mapping, key, path, default=_MISSING):
    if key in mapping:
        return mapping.pop(key)
    if default is _MISSING:
        raise ScenarioError(f"{path}.{key}: required key is missing")
    return default


def _as_str(value, path, choices=None):
    if not isinstance(value, str):
        raise ScenarioError(f"{path}: expected a string")
    if choices is not None and value not in choices:
        opts = ", ".join(choices)
        raise ScenarioError(f"{path}: must be one of: {opts} (got {value!r})")
    return value


def _as_bool(value, path):
    if not isinstance(value, bool):
        raise ScenarioError(f"{path}: expected true or false")
    return value


def _as_float(value, path, minimum=None, exclusive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{path}: expected a number")
    value = float(value)
    if not np.isfinite(value):
        raise ScenarioError(f"{path}: must be finite")
    if minimum is not None:
        if exclusive and not value > minimum:
            raise ScenarioError(f"{path}: must be > {minimum}")
        if not exclusive and not value >= minimum:
            raise ScenarioError(f"{path}: must be >= {minimum}")
    return value


def _as_int(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"{path}: expected an integer")
    if minimum is not None and value < minimum:
        raise ScenarioError(f"{path}: must be >= {minimum}")
    return value


def _as_vector(value, path, length=None, minimum=None):
    node = _expect_list(value, path)
    out = [_as_float(v, f"{path}[{i}]", minimum=minimum) for i, v in enumerate(node)]
    if length is not None and len(out) != length:
        raise ScenarioError(f"{path}: expected {length} entries, got {len(out)}")
    return out


# ---------------------------------------------------------------------------
# section builders


def _build_model(node, path):
    sec = _expect_map(node, path)
    gravity = _as_vector(_pop(sec, "gravity_m_per_s2", path, [0.0, -9.81]),
                         f"{path}.gravity_m_per_s2", length=2)

    bodies_node = _expect_list(_pop(sec, "bodies", path), f"{path}.bodies")
    if not bodies_node:
        raise ScenarioError(f"{path}.bodies: at least one body is required")
    bodies, body_index, bodies_data = [], {}, []
    for i, raw in enumerate(bodies_node):
        bpath = f"{path}.bodies[{i}]"
        mp = _expect_map(raw, bpath)
        name = _as_str(_pop(mp, "name", bpath), f"{bpath}.name")
        if name in body_index or name == "world":
            raise ScenarioError(f"{bpath}.name: duplicate or reserved name {name!r}")
        mass = _as_float(_pop(mp, "mass_kg", bpath), f"{bpath}.mass_kg",
                         minimum=0.0, exclusive=True)
        inertia = _as_float(_pop(mp, "inertia_kg_m2", bpath),
                            f"{bpath}.inertia_kg_m2", minimum=0.0, exclusive=True)
        com = _as_vector(_pop(mp, "com_m", bpath, [0.0, 0.0]),
                         f"{bpath}.com_m", length=2)
        _reject_unknown(mp, bpath)
        body_index[name] = i
        bodies.append(Body(mass=mass, inertia=inertia, com=tuple(com)))
        bodies_data.append({"name": name, "mass_kg": mass,
                            "inertia_kg_m2": inertia, "com_m": com})

    joints_node = _expect_list(_pop(sec, "joints", path), f"{path}.joints")
    if len(joints_node) != len(bodies):
        raise ScenarioError(f"{path}.joints: expected exactly one joint per "
                            f"body ({len(bodies)}), got {len(joints_node)}")
    joints = [None] * len(bodies)
    joints_data = [None] * len(bodies)
    joint_names = {}
    joint_of_body = [None] * len(bodies)
    for i, raw in enumerate(joints_node):
        jpath = f"{path}.joints[{i}]"
        mp = _expect_map(raw, jpath)
        name = _as_str(_pop(mp, "name", jpath), f"{jpath}.name")
        if name in joint_names:
            raise ScenarioError(f"{jpath}.name: duplicate name {name!r}")
        kind = _as_str(_pop(mp, "type", jpath), f"{jpath}.type",
                       choices=_JOINT_TYPES)
        parent_name = _as_str(_pop(mp, "parent", jpath), f"{jpath}.parent")
        child_name = _as_str(_pop(mp, "child", jpath), f"{jpath}.child")
        if child_name not in body_index:
            raise ScenarioError(f"{jpath}.child: unknown body {child_name!r}")
        child = body_index[child_name]
        if joint_of_body[child] is not None:
            raise ScenarioError(f"{jpath}.child: body {child_name!r} already "
                                f"has a joint")
        if parent_name == "world":
            parent = WORLD
        elif parent_name in body_index:
            parent = body_index[parent_name]
            if parent >= child:
                raise ScenarioError(f"{jpath}.parent: parent body must be "
                                    f"declared before its child (tree order)")
        else:
            raise ScenarioError(f"{jpath}.parent: unknown body {parent_name!r}")
        origin = _as_vector(_pop(mp, "origin_m", jpath, [0.0, 0.0]),
                            f"{jpath}.origin_m", length=2)
        damping = _as_float(_pop(mp, "damping", jpath, 0.0),
                            f"{jpath}.damping", minimum=0.0)
        axis = [1.0, 0.0]
        if "axis" in mp:
            if kind != PRISMATIC:
                raise ScenarioError(f"{jpath}.axis: only prismatic joints "
                                    f"take an axis")
            axis = _as_vector(mp.pop("axis"), f"{jpath}.axis", length=2)
            norm = float(np.hypot(*axis))
            if abs(norm - 1.0) > 1e-9:
                raise ScenarioError(f"{jpath}.axis: must be unit length")
        _reject_unknown(mp, jpath)
        joint_names[name] = child
        joint_of_body[child] = name
        joints[child] = Joint(kind=kind, parent=parent, origin=tuple(origin),
                              axis=tuple(axis), damping=damping)
        entry = {"name": name, "type": kind, "parent": parent_name,
                 "child": child_name, "origin_m": origin, "damping": damping}
        if kind == PRISMATIC:
            entry["axis"] = axis
        joints_data[child] = entry

    # DoF bookkeeping: joint i (body order) owns a contiguous DoF slice.
    dof_labels, dof_start = [], []
    for i, joint in enumerate(joints):
        dof_start.append(len(dof_labels))
        jname = joint_of_body[i]
        if joint.kind == FREE:
            dof_labels.extend(jname + sfx for sfx in _FREE_SUFFIXES)
        else:
            dof_labels.append(jname)

    act_node = _expect_list(_pop(sec, "actuated_joints", path),
                            f"{path}.actuated_joints")
    apath = f"{path}.actuated_joints"
    if not act_node:
        raise ScenarioError(f"{apath}: at least one actuated joint is required")
    actuated, seen = [], set()
    for i, raw in enumerate(act_node):
        name = _as_str(raw, f"{apath}[{i}]")
        if name not in joint_names:
            raise ScenarioError(f"{apath}[{i}]: unknown joint {name!r}")
        if name in seen:
            raise ScenarioError(f"{apath}[{i}]: joint {name!r} listed twice")
        seen.add(name)
        body = joint_names[name]
        ndof = 3 if joints[body].kind == FREE else 1
        actuated.extend(range(dof_start[body], dof_start[body] + ndof))

    coll_node = _expect_list(_pop(sec, "collision", path, []),
                             f"{path}.collision")
    collision, prim_index, coll_data = [], {}, []
    for i, raw in enumerate(coll_node):
        cpath = f"{path}.collision[{i}]"
        mp = _expect_map(raw, cpath)
        name = _as_str(_pop(mp, "name", cpath), f"{cpath}.name")
        if name in prim_index:
            raise ScenarioError(f"{cpath}.name: duplicate name {name!r}")
        kind = _as_str(_pop(mp, "kind", cpath), f"{cpath}.kind",
                       choices=(SPHERE, HALFSPACE))
        body_name = _as_str(_pop(mp, "body", cpath), f"{cpath}.body")
        if body_name == "world":
            body = WORLD
        elif body_name in body_index:
            body = body_index[body_name]
        else:
            raise ScenarioError(f"{cpath}.body: unknown body {body_name!r}")
        offset = _as_vector(_pop(mp, "offset_m", cpath, [0.0, 0.0]),
                            f"{cpath}.offset_m", length=2)
        entry = {"name": name, "kind": kind, "body": body_name,
                 "offset_m": offset}
        if kind == SPHERE:
            radius = _as_float(_pop(mp, "radius_m", cpath), f"{cpath}.radius_m",
                               minimum=0.0, exclusive=True)
            prim = CollisionPrimitive(kind=SPHERE, body=body,
                                      offset=tuple(offset), radius=radius)
            entry["radius_m"] = radius
        else:
            normal = _as_vector(_pop(mp, "normal", cpath, [0.0, 1.0]),
                                f"{cpath}.normal", length=2)
            if abs(float(np.hypot(*normal)) - 1.0) > 1e-9:
                raise ScenarioError(f"{cpath}.normal: must be unit length")
            prim = CollisionPrimitive(kind=HALFSPACE, body=body,
                                      offset=tuple(offset),
                                      normal=tuple(normal))
            entry["normal"] = normal
        _reject_unknown(mp, cpath)
        prim_index[name] = i
        collision.append(prim)
        coll_data.append(entry)

    pairs_node = _expect_list(_pop(sec, "contact_pairs", path, []),
                              f"{path}.contact_pairs")
    pairs, pair_labels, pairs_data = [], [], []
    for i, raw in enumerate(pairs_node):
        ppath = f"{path}.contact_pairs[{i}]"
        names = _expect_list(raw, ppath)
        if len(names) != 2:
            raise ScenarioError(f"{ppath}: expected two primitive names")
        idx = []
        for j, nm in enumerate(names):
            nm = _as_str(nm, f"{ppath}[{j}]")
            if nm not in prim_index:
                raise ScenarioError(f"{ppath}[{j}]: unknown primitive {nm!r}")
            idx.append(prim_index[nm])
        if idx[0] == idx[1]:
            raise ScenarioError(f"{ppath}: a primitive cannot contact itself")
        kinds = {collision[idx[0]].kind, collision[idx[1]].kind}
        if kinds == {HALFSPACE}:
            raise ScenarioError(f"{ppath}: at least one primitive must be a "
                                f"sphere")
        pairs.append(tuple(idx))
        pair_labels.append(f"{names[0]}:{names[1]}")
        pairs_data.append([str(names[0]), str(names[1])])

    _reject_unknown(sec, path)
    try:
        model = ModelTopology(bodies=tuple(bodies), joints=tuple(joints),
                              actuated=tuple(sorted(actuated)),
                              gravity=tuple(gravity),
                              collision=tuple(collision),
                              contact_pairs=tuple(pairs))
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    data = {"gravity_m_per_s2": gravity, "bodies": bodies_data,
            "joints": joints_data,
            "actuated_joints": [str(n) for n in act_node],
            "collision": coll_data, "contact_pairs": pairs_data}
    return model, tuple(dof_labels), tuple(pair_labels), data


_CONTACT_KEYS = (
    ("stiffness_n_per_m", "stiffness"),
    ("smoothing_m", "smoothing"),
    ("friction_coefficient", "friction"),
    ("stiction_velocity_m_per_s", "stiction_velocity"),
    ("dissipation_velocity_m_per_s", "dissipation_velocity"),
)


def _build_contact(node, path, defaults=None):
    sec = _expect_map(node, path)
    kwargs, data = {}, {}
    for key, field_name in _CONTACT_KEYS:
        if defaults is None:
            raw = _pop(sec, key, path)
        else:
            raw = _pop(sec, key, path, defaults[key])
        minimum = None if field_name == "friction" else 0.0
        exclusive = field_name != "friction"
        if field_name == "friction":
            minimum = 0.0
            exclusive = False
        kwargs[field_name] = _as_float(raw, f"{path}.{key}", minimum=minimum,
                                       exclusive=exclusive)
        data[key] = kwargs[field_name]
    _reject_unknown(sec, path)
    return ContactParams(**kwargs), data


def _build_nominal(node, path, nv, num_steps, dt, q0, v0):
    sec = _expect_map(node, path)
    kind = _as_str(_pop(sec, "kind", path), f"{path}.kind",
                   choices=("constant", "ramp", "knots"))
    grid = np.arange(num_steps + 1) * dt
    data = {"kind": kind}
    if kind == "constant":
        pos = _as_vector(_pop(sec, "position", path), f"{path}.position",
                         length=nv)
        vel = _as_vector(_pop(sec, "velocity", path, [0.0] * nv),
                         f"{path}.velocity", length=nv)
        q_nom = np.tile(pos, (num_steps + 1, 1))
        v_nom = np.tile(vel, (num_steps + 1, 1))
        data["position"] = pos
        data["velocity"] = vel
    elif kind == "ramp":
        start = _as_vector(_pop(sec, "start_position", path, list(q0)),
                           f"{path}.start_position", length=nv)
        end = _as_vector(_pop(sec, "end_position", path),
                         f"{path}.end_position", length=nv)
        start_arr, end_arr = np.array(start), np.array(end)
        alpha = (grid / grid[-1])[:, None]
        q_nom = (1 - alpha) * start_arr + alpha * end_arr
        v_nom = np.tile((end_arr - start_arr) / grid[-1], (num_steps + 1, 1))
        data["start_position"] = start
        data["end_position"] = end
    else:
        times = _as_vector(_pop(sec, "times_s", path), f"{path}.times_s")
        if len(times) < 2:
            raise ScenarioError(f"{path}.times_s: need at least two knots")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ScenarioError(f"{path}.times_s: must be strictly increasing")
        pos_node = _expect_list(_pop(sec, "positions", path),
                                f"{path}.positions")
        if len(pos_node) != len(times):
            raise ScenarioError(f"{path}.positions: expected one row per knot "
                                f"time ({len(times)})")
        pos = [_as_vector(row, f"{path}.positions[{i}]", length=nv)
               for i, row in enumerate(pos_node)]
        pos_arr = np.array(pos)
        q_nom = np.column_stack([np.interp(grid, times, pos_arr[:, d])
                                 for d in range(nv)])
        data["times_s"] = list(times)
        data["positions"] = pos
        if "velocities" in sec:
            vel_node = _expect_list(sec.pop("velocities"),
                                    f"{path}.velocities")
            if len(vel_node) != len(times):
                raise ScenarioError(f"{path}.velocities: expected one row per "
                                    f"knot time ({len(times)})")
            vel = [_as_vector(row, f"{path}.velocities[{i}]", length=nv)
                   for i, row in enumerate(vel_node)]
            vel_arr = np.array(vel)
            v_nom = np.column_stack([np.interp(grid, times, vel_arr[:, d])
                                     for d in range(nv)])
            data["velocities"] = vel
        else:
            v_nom = np.empty_like(q_nom)
            v_nom[0] = v0
            v_nom[1:] = np.diff(q_nom, axis=0) / dt
    _reject_unknown(sec, path)
    return q_nom, v_nom, data


def _build_problem(node, path, model, contact):
    sec = _expect_map(node, path)
    nv = model.nv
    num_steps = _as_int(_pop(sec, "num_steps", path), f"{path}.num_steps",
                        minimum=2)
    dt = _as_float(_pop(sec, "time_step_s", path), f"{path}.time_step_s",
                   minimum=0.0, exclusive=True)
    q0 = _as_vector(_pop(sec, "initial_position", path),
                    f"{path}.initial_position", length=nv)
    v0 = _as_vector(_pop(sec, "initial_velocity", path, [0.0] * nv),
                    f"{path}.initial_velocity", length=nv)
    wq = _as_vector(_pop(sec, "weight_position", path),
                    f"{path}.weight_position", length=nv, minimum=0.0)
    wv = _as_vector(_pop(sec, "weight_velocity", path),
                    f"{path}.weight_velocity", length=nv, minimum=0.0)
    wqf = _as_vector(_pop(sec, "weight_position_final", path),
                     f"{path}.weight_position_final", length=nv, minimum=0.0)
    wvf = _as_vector(_pop(sec, "weight_velocity_final", path),
                     f"{path}.weight_velocity_final", length=nv, minimum=0.0)
    wtau = _as_vector(_pop(sec, "weight_torque", path),
                      f"{path}.weight_torque", length=nv, minimum=0.0)
    mode = _as_str(_pop(sec, "constraint_mode", path, PENALTY),
                   f"{path}.constraint_mode", choices=(PENALTY, MULTIPLIERS))
    penalty = _as_float(_pop(sec, "penalty_weight", path, 1000.0),
                        f"{path}.penalty_weight", minimum=0.0, exclusive=True)
    guess = _as_str(_pop(sec, "initial_guess", path, GUESS_HOLD),
                    f"{path}.initial_guess", choices=(GUESS_HOLD,
                                                      GUESS_NOMINAL))
    q_nom, v_nom, nominal_data = _build_nominal(
        _pop(sec, "nominal", path), f"{path}.nominal", nv, num_steps, dt,
        q0, v0)
    _reject_unknown(sec, path)
    try:
        problem = ProblemDefinition(
            model=model, contact=contact, num_steps=num_steps, dt=dt,
            q_init=np.array(q0), v_init=np.array(v0),
            q_nominal=q_nom, v_nominal=v_nom,
            weight_q=np.array(wq), weight_v=np.array(wv),
            weight_q_final=np.array(wqf), weight_v_final=np.array(wvf),
            weight_tau=np.array(wtau), constraint_mode=mode,
            penalty_weight=penalty)
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    data = {"num_steps": num_steps, "time_step_s": dt,
            "initial_position": q0, "initial_velocity": v0,
            "weight_position": wq, "weight_velocity": wv,
            "weight_position_final": wqf, "weight_velocity_final": wvf,
            "weight_torque": wtau, "constraint_mode": mode,
            "penalty_weight": penalty, "initial_guess": guess,
            "nominal": nominal_data}
    return problem, guess, data


_SOLVER_FIELDS = (
    ("max_iterations", _as_int, {"minimum": 0}),
    ("initial_radius", _as_float, {"minimum": 0.0, "exclusive": True}),
    ("max_radius", _as_float, {"minimum": 0.0, "exclusive": True}),
    ("acceptance_threshold", _as_float, {"minimum": 0.0}),
    ("cost_decrease_tol", _as_float, {"minimum": 0.0, "exclusive": True}),
    ("gradient_tol", _as_float, {"minimum": 0.0, "exclusive": True}),
    ("radius_floor", _as_float, {"minimum": 0.0, "exclusive": True}),
)


def _build_solver(node, path):
    sec = _expect_map(node, path) if node is not None else {}
    defaults = SolverOptions()
    kwargs, data = {}, {}
    for key, conv, kw in _SOLVER_FIELDS:
        raw = _pop(sec, key, path, getattr(defaults, key))
        kwargs[key] = conv(raw, f"{path}.{key}", **kw)
        data[key] = kwargs[key]
    raw = _pop(sec, "scaling", path, defaults.scaling)
    kwargs["scaling"] = _as_bool(raw, f"{path}.scaling")
    data["scaling"] = kwargs["scaling"]
    _reject_unknown(sec, path)
    try:
        return SolverOptions(**kwargs), data
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def _build_mpc(node, path, model, num_actuated, nv, dt):
    sec = _expect_map(node, path)
    replan = _as_float(_pop(sec, "replan_period_s", path),
                       f"{path}.replan_period_s", minimum=0.0, exclusive=True)
    episode = _as_float(_pop(sec, "episode_seconds", path),
                        f"{path}.episode_seconds", minimum=0.0)
    iters = _as_int(_pop(sec, "iterations_per_replan", path, 1),
                    f"{path}.iterations_per_replan", minimum=1)
    assume = _as_bool(_pop(sec, "assume_zero_unactuated_velocity", path,
                           False),
                      f"{path}.assume_zero_unactuated_velocity")

    gp = f"{path}.gains"
    gains_sec = _expect_map(_pop(sec, "gains", path), gp)
    gains_kw, gains_data = {}, {}
    for key in ("kp", "kd"):
        raw = _pop(gains_sec, key, gp)
        if isinstance(raw, (int, float)) and not isinstance(raw, bool):
            vec = [_as_float(raw, f"{gp}.{key}", minimum=0.0)] * num_actuated
        else:
            vec = _as_vector(raw, f"{gp}.{key}", length=num_actuated,
                             minimum=0.0)
        gains_kw[key] = np.array(vec)
        gains_data[key] = vec
    _reject_unknown(gains_sec, gp)

    goal_path = f"{path}.goal"
    goal_sec = _expect_map(_pop(sec, "goal", path, {"kind": GOAL_FIXED}),
                           goal_path)
    goal_kind = _as_str(_pop(goal_sec, "kind", goal_path), f"{goal_path}.kind",
                        choices=(GOAL_FIXED, GOAL_ADVANCE))
    goal_data = {"kind": goal_kind}
    if goal_kind == GOAL_ADVANCE:
        dof = _as_int(_pop(goal_sec, "dof", goal_path), f"{goal_path}.dof",
                      minimum=0)
        if dof >= nv:
            raise ScenarioError(f"{goal_path}.dof: out of range (model has "
                                f"{nv} DoFs)")
        delta = _as_float(_pop(goal_sec, "delta", goal_path),
                          f"{goal_path}.delta")
        goal = GoalRule(kind=goal_kind, dof=dof, delta=delta)
        goal_data["dof"] = dof
        goal_data["delta"] = delta
    else:
        goal = GoalRule(kind=GOAL_FIXED)
    _reject_unknown(goal_sec, goal_path)

    dist_node = _expect_list(_pop(sec, "disturbances", path, []),
                             f"{path}.disturbances")
    disturbances, dist_data = [], []
    for i, raw in enumerate(dist_node):
        dpath = f"{path}.disturbances[{i}]"
        mp = _expect_map(raw, dpath)
        t = _as_float(_pop(mp, "time_s", dpath), f"{dpath}.time_s",
                      minimum=0.0)
        dof = _as_int(_pop(mp, "dof", dpath), f"{dpath}.dof", minimum=0)
        if dof >= nv:
            raise ScenarioError(f"{dpath}.dof: out of range (model has "
                                f"{nv} DoFs)")
        dv = _as_float(_pop(mp, "delta_velocity", dpath),
                       f"{dpath}.delta_velocity")
        _reject_unknown(mp, dpath)
        disturbances.append(Disturbance(time_s=t, dof=dof, delta_velocity=dv))
        dist_data.append({"time_s": t, "dof": dof, "delta_velocity": dv})
    _reject_unknown(sec, path)

    try:
        config = MpcConfig(replan_period=replan, episode_seconds=episode,
                           gains=TrackingGains(**gains_kw), goal=goal,
                           disturbances=tuple(disturbances),
                           iterations_per_replan=iters,
                           assume_zero_unactuated_velocity=assume)
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    data = {"replan_period_s": replan, "episode_seconds": episode,
            "iterations_per_replan": iters,
            "assume_zero_unactuated_velocity": assume,
            "gains": gains_data, "goal": goal_data,
            "disturbances": dist_data}
    return config, data


# ---------------------------------------------------------------------------
# scenario object


@dataclass
class Scenario:
    """A fully validated scenario: model, problem, solver, simulator, MPC.

    ``data`` holds the canonical normalized file content (defaults filled
    in); :func:`serialize` returns a deep copy of it, so a serialize/parse
    round trip reproduces the scenario exactly.
    """

    name: str
    description: str
    model: ModelTopology
    planner_contact: ContactParams
    simulator_contact: ContactParams
    problem: ProblemDefinition
    solver_options: SolverOptions
    simulator: SimulatorConfig
    mpc: MpcConfig | None
    initial_guess_kind: str
    dof_labels: tuple[str, ...]
    pair_labels: tuple[str, ...]
    data: dict

    def initial_guess(self) -> np.ndarray:
        """Knot positions the optimizer starts from.

        ``hold`` repeats the initial configuration; ``nominal`` copies the
        nominal trajectory (with the first knot re-pinned to the initial
        configuration, which the solver requires).
        """
        if self.initial_guess_kind == GUESS_NOMINAL:
            guess = self.problem.q_nominal.copy()
            guess[0] = self.problem.q_init
            return guess
        return np.tile(self.problem.q_init,
                       (self.problem.num_steps + 1, 1))

    def with_overrides(self, mode: str | None = None,
                       max_iterations: int | None = None,
                       episode_seconds: float | None = None,
                       scaling: bool | None = None,
                       workers: int | None = None) -> "Scenario":
        """A new scenario with command-line style overrides applied.

        Overrides are written into the canonical data and the whole
        scenario is re-validated, so an override can never produce a
        configuration that the file format itself would reject.
        """
        data = copy.deepcopy(self.data)
        if mode is not None:
            data["problem"]["constraint_mode"] = mode
        if max_iterations is not None:
            data.setdefault("solver", {})["max_iterations"] = max_iterations
        if scaling is not None:
            data.setdefault("solver", {})["scaling"] = scaling
        if episode_seconds is not None:
            if "mpc" not in data:
                raise ScenarioError("scenario.mpc: section required to "
                                    "override episode_seconds")
            data["mpc"]["episode_seconds"] = episode_seconds
        out = from_dict(data)
        if workers is not None:
            out.solver_options = replace(out.solver_options,
                                         workers=int(workers))
        return out


def from_dict(raw) -> Scenario:
    """Validate a parsed YAML document and build the scenario."""
    sec = _expect_map(raw, "scenario")
    name = _as_str(_pop(sec, "name", "scenario"), "scenario.name")
    description = _as_str(_pop(sec, "description", "scenario", ""),
                          "scenario.description")
    model, dof_labels, pair_labels, model_data = _build_model(
        _pop(sec, "model", "scenario"), "scenario.model")
    planner_contact, planner_data = _build_contact(
        _pop(sec, "planner_contact", "scenario"), "scenario.planner_contact")
    if "simulator_contact" in sec:
        simulator_contact, sim_contact_data = _build_contact(
            sec.pop("simulator_contact"), "scenario.simulator_contact",
            defaults=planner_data)
    else:
        simulator_contact, sim_contact_data = planner_contact, dict(planner_data)
    problem, guess_kind, problem_data = _build_problem(
        _pop(sec, "problem", "scenario"), "scenario.problem", model,
        planner_contact)
    solver_options, solver_data = _build_solver(sec.pop("solver", None),
                                                "scenario.solver")

    sim_path = "scenario.simulator"
    sim_sec = _expect_map(sec.pop("simulator", {}), sim_path)
    sim_step = _as_float(_pop(sim_sec, "time_step_s", sim_path,
                              problem.dt / 10.0),
                         f"{sim_path}.time_step_s", minimum=0.0,
                         exclusive=True)
    _reject_unknown(sim_sec, sim_path)
    if sim_step > problem.dt / 10.0 + 1e-12:
        raise ScenarioError(f"{sim_path}.time_step_s: must be at most a "
                            f"tenth of problem.time_step_s for stable "
                            f"tracking (got {sim_step}, need <= "
                            f"{problem.dt / 10.0})")
    simulator = SimulatorConfig(step=sim_step, contact=simulator_contact)

    mpc_config, mpc_data = None, None
    if "mpc" in sec:
        mpc_config, mpc_data = _build_mpc(sec.pop("mpc"), "scenario.mpc",
                                          model, model.num_actuated,
                                          model.nv, problem.dt)
    _reject_unknown(sec, "scenario")

    data = {"name": name, "description": description, "model": model_data,
            "planner_contact": planner_data,
            "simulator_contact": sim_contact_data,
            "problem": problem_data, "solver": solver_data,
            "simulator": {"time_step_s": sim_step}}
    if mpc_data is not None:
        data["mpc"] = mpc_data
    return Scenario(name=name, description=description, model=model,
                    planner_contact=planner_contact,
                    simulator_contact=simulator_contact, problem=problem,
                    solver_options=solver_options, simulator=simulator,
                    mpc=mpc_config, initial_guess_kind=guess_kind,
                    dof_labels=dof_labels, pair_labels=pair_labels,
                    data=data)


def loads(text: str) -> Scenario:
    """Parse scenario YAML text."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            raise ScenarioError(
                f"scenario: YAML syntax error at line {mark.line + 1}, "
                f"column {mark.column + 1}: {getattr(exc, 'problem', exc)}"
            ) from exc
        raise ScenarioError(f"scenario: YAML syntax error: {exc}") from exc
    return from_dict(raw)


def load(path) -> Scenario:
    """Parse a scenario file; error messages are prefixed with the path."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"{p}: cannot read scenario file: {exc}") from exc
    try:
        return loads(text)
    except ScenarioError as exc:
        raise ScenarioError(f"{p}: {exc}") from exc


def serialize(scenario: Scenario) -> dict:
    """Canonical plain-data form; ``from_dict`` of it reproduces the
    scenario."""
    return copy.deepcopy(scenario.data)


def dumps(scenario: Scenario) -> str:
    return yaml.safe_dump(serialize(scenario), sort_keys=False)
