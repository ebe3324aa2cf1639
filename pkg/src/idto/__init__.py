"""Contact-implicit trajectory optimization for planar robots.

The package plans through contact without a prescribed contact schedule:
decision variables are the knot positions only, velocities and torques
follow from finite differences and inverse dynamics, and contact enters
through a smooth compliant force model that finite differences can see
through.  A Gauss-Newton trust-region solver with banded linear algebra
does the optimization; an MPC layer replans it in closed loop against a
separate simulator.
"""

__version__ = "0.1.0"

from .contact import CollisionPrimitive, ContactParams, HALFSPACE, SPHERE
from .dynamics import (Body, FREE, Joint, ModelTopology, PRISMATIC, REVOLUTE,
                       State, WORLD)
from .mpc import (Disturbance, EpisodeLog, GoalRule, MpcConfig,
                  SimulatorConfig, TrackingGains, run_mpc)
from .problem import MULTIPLIERS, PENALTY, ProblemDefinition, total_cost
from .scenario import Scenario, ScenarioError, load as load_scenario
from .solver import IterationRecord, Solution, SolverOptions, solve

__all__ = [
    "Body", "CollisionPrimitive", "ContactParams", "Disturbance",
    "EpisodeLog", "FREE", "GoalRule", "HALFSPACE", "IterationRecord", "Joint",
    "ModelTopology", "MpcConfig", "MULTIPLIERS", "PENALTY", "PRISMATIC",
    "ProblemDefinition", "REVOLUTE", "Scenario", "ScenarioError",
    "SimulatorConfig", "Solution", "SolverOptions", "SPHERE", "State",
    "TrackingGains", "WORLD", "load_scenario", "run_mpc", "solve",
    "total_cost", "__version__",
]
