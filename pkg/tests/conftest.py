"""Shared fixtures: small hand-built models and the shipped scenarios."""

import copy
import os
from pathlib import Path

import hypothesis
import numpy as np
import pytest
import yaml

from idto import scenario as scn
from idto.contact import ContactParams
from idto.dynamics import Body, Joint, ModelTopology
from idto.problem import ProblemDefinition

hypothesis.settings.register_profile(
    "default", max_examples=25, deadline=None,
    suppress_health_check=[hypothesis.HealthCheck.too_slow])
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.register_profile(
    "thorough", max_examples=200, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE",
                                                "default"))

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture(scope="session")
def scenario_dir() -> Path:
    return SCENARIO_DIR


@pytest.fixture(scope="session")
def spinner_scenario():
    return scn.load(SCENARIO_DIR / "spinner.yaml")


@pytest.fixture(scope="session")
def hopper_scenario():
    return scn.load(SCENARIO_DIR / "hopper.yaml")


@pytest.fixture(scope="session")
def pusher_scenario():
    return scn.load(SCENARIO_DIR / "pusher.yaml")


@pytest.fixture
def spinner_dict(spinner_scenario):
    """Mutable copy of the spinner scenario data for invalid-input tests."""
    return copy.deepcopy(spinner_scenario.data)


def as_yaml(data: dict) -> str:
    return yaml.safe_dump(data, sort_keys=False)


def pendulum_model(damping: float = 0.0) -> ModelTopology:
    """One revolute link, mass 1 at distance 0.5, actuated."""
    return ModelTopology(
        bodies=(Body(mass=1.0, inertia=0.05, com=(0.5, 0.0)),),
        joints=(Joint(kind="revolute", parent=-1, damping=damping),),
        actuated=(0,))


def cart_model(damping: float = 0.2) -> ModelTopology:
    """One prismatic DoF along x: inverse dynamics is linear in (q, v, a)."""
    return ModelTopology(
        bodies=(Body(mass=2.0, inertia=0.01),),
        joints=(Joint(kind="prismatic", parent=-1, axis=(1.0, 0.0),
                      damping=damping),),
        actuated=(0,))


def ball_model() -> ModelTopology:
    """Free disc of radius 0.1 over a flat ground half-space, unactuated
    except for a horizontal thruster on x (keeps the problem machinery
    happy when one is built on top)."""
    from idto.contact import CollisionPrimitive

    return ModelTopology(
        bodies=(Body(mass=0.5, inertia=0.0025),),
        joints=(Joint(kind="free", parent=-1),),
        actuated=(0,),
        collision=(CollisionPrimitive(kind="sphere", body=0, radius=0.1),
                   CollisionPrimitive(kind="halfspace", body=-1,
                                      normal=(0.0, 1.0))),
        contact_pairs=((0, 1),))


def default_contact() -> ContactParams:
    return ContactParams(stiffness=200.0, smoothing=0.01, friction=0.5,
                         stiction_velocity=0.05, dissipation_velocity=0.1)


def make_problem(model: ModelTopology, num_steps: int = 4, dt: float = 0.05,
                 q_target=None, mode: str = "penalty",
                 penalty_weight: float = 100.0,
                 contact: ContactParams | None = None) -> ProblemDefinition:
    """Reach-a-target problem with unit-ish weights on the given model."""
    n = model.nq
    q0 = np.zeros(n)
    if q_target is None:
        q_target = np.full(n, 0.3)
    q_nom = np.tile(np.asarray(q_target, dtype=float), (num_steps + 1, 1))
    w_tau = np.zeros(n)
    w_tau[list(model.actuated)] = 0.05
    return ProblemDefinition(
        model=model,
        contact=contact or default_contact(),
        num_steps=num_steps,
        dt=dt,
        q_init=q0,
        v_init=np.zeros(n),
        q_nominal=q_nom,
        v_nominal=np.zeros_like(q_nom),
        weight_q=np.full(n, 2.0),
        weight_v=np.full(n, 0.2),
        weight_q_final=np.full(n, 10.0),
        weight_v_final=np.full(n, 1.0),
        weight_tau=w_tau,
        constraint_mode=mode,
        penalty_weight=penalty_weight)
