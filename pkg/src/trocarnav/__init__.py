"""Kinematic path following of a rigid tool through an incision orifice."""

from .curve import Curve3D, CurvePoint, load_curve
from .geometry import Pose, Twist
from .hierarchy import Limits, PriorityStack, solve_two_level
from .plant import Plant, clearance
from .scenarios import RunConfig, RunSummary, gain_sweep, run_scenario
from .supervisor import ConstraintMode, Phase, Scene, SupervisorConfig, step
from .tasks import Gains, SingularConfigurationError

__version__ = "0.1.0"

__all__ = [
    "ConstraintMode",
    "Curve3D",
    "CurvePoint",
    "Gains",
    "Limits",
    "Phase",
    "Plant",
    "Pose",
    "PriorityStack",
    "RunConfig",
    "RunSummary",
    "Scene",
    "SingularConfigurationError",
    "SupervisorConfig",
    "Twist",
    "clearance",
    "gain_sweep",
    "load_curve",
    "run_scenario",
    "solve_two_level",
    "step",
]
