"""Time-optimal transport of a loosely placed, liquid-filled cup on a tray.

A library and CLI that computes time-optimal motions of a 6-axis robot
(3 linear + 3 rotary axes) moving a cup along a prescribed geometric path
while preventing lifting, slipping, tipping, and sloshing, via direct
multiple shooting over an integrator-chain model with a spherical-pendulum
liquid surrogate.
"""

from .audit import AuditGates, AuditReport, audit_constraints, resimulate, run_audit
from .config import ConfigError, RunConfig, build_run_config, load_run_config
from .contact import CupParams, Wrench, contact_wrench, task_constraints
from .kinematics import (
    FrameMotion,
    JointLimits,
    JointState,
    Pose,
    RobotModel,
    forward_frame_E,
    frame_motion_E,
)
from .ocp import (
    BoundaryConditions,
    ModelSet,
    Nlp,
    OcpConfig,
    OcpInput,
    OcpState,
    Trajectory,
    build_nlp,
    extract_trajectory,
    initial_guess,
    rk4_step,
    state_derivative,
)
from .path import PathPoint, PathSpec, eval_path, path_to_joint
from .pendulum import (
    PendulumParams,
    PendulumSingularityError,
    PendulumState,
    pendulum_accel,
    pendulum_energy,
)
from .solver import (
    KktReport,
    NlpSolution,
    SolveStatus,
    SolverOptions,
    check_kkt,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "AuditGates", "AuditReport", "audit_constraints", "resimulate", "run_audit",
    "ConfigError", "RunConfig", "build_run_config", "load_run_config",
    "CupParams", "Wrench", "contact_wrench", "task_constraints",
    "FrameMotion", "JointLimits", "JointState", "Pose", "RobotModel",
    "forward_frame_E", "frame_motion_E",
    "BoundaryConditions", "ModelSet", "Nlp", "OcpConfig", "OcpInput", "OcpState",
    "Trajectory", "build_nlp", "extract_trajectory", "initial_guess",
    "rk4_step", "state_derivative",
    "PathPoint", "PathSpec", "eval_path", "path_to_joint",
    "PendulumParams", "PendulumSingularityError", "PendulumState",
    "pendulum_accel", "pendulum_energy",
    "KktReport", "NlpSolution", "SolveStatus", "SolverOptions", "check_kkt", "solve",
]
