"""Forward kinematics of the 3-linear + 3-rotary gantry carrying the tray.

The three linear joints translate the coupling point directly; the rotary
unit hangs off it with zero intermediate offsets and carries the tray frame
at a fixed offset from the wrist point.  Pose, velocity, and acceleration
of the tray frame are propagated recursively along the rotary chain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import generic as g
from .generic import IDENTITY3, ZERO3

AXIS_NAMES = ("x", "y", "z", "B", "C", "A")
UNIT_AXIS_TOL = 1e-12


@dataclass
class AxisBounds:
    """Per-axis lower/upper bounds for one derivative level, 6 joints in
    (x, y, z, B, C, A) order."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != (6,) or self.upper.shape != (6,):
            raise ValueError("axis bounds must have 6 entries")
        if not np.all(self.lower < self.upper):
            raise ValueError("every lower bound must lie strictly below its upper bound")


def _symmetric(lin: float, rot: float) -> AxisBounds:
    mags = np.array([lin, lin, lin, rot, rot, rot])
    return AxisBounds(-mags, mags)


@dataclass
class JointLimits:
    position: AxisBounds = field(default_factory=lambda: _symmetric(1.0, np.pi))
    velocity: AxisBounds = field(default_factory=lambda: _symmetric(2.0, 5.0))
    acceleration: AxisBounds = field(default_factory=lambda: _symmetric(10.0, 50.0))
    jerk: AxisBounds = field(default_factory=lambda: _symmetric(100.0, 500.0))


@dataclass
class RobotModel:
    """Kinematic parameters of the gantry plus joint bounds.

    ``rotary_axes`` holds the unit axes of the three rotary joints in chain
    order (q_B, q_C, q_A), each resolved in the frame preceding it.
    """

    r_AE: np.ndarray = field(default_factory=lambda: np.array([0.07, 0.0, 0.055]))
    rotary_axes: np.ndarray = field(
        default_factory=lambda: np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    )
    joint_limits: JointLimits = field(default_factory=JointLimits)
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))

    def __post_init__(self):
        self.r_AE = np.asarray(self.r_AE, dtype=float)
        self.rotary_axes = np.asarray(self.rotary_axes, dtype=float)
        self.gravity = np.asarray(self.gravity, dtype=float)
        if self.r_AE.shape != (3,) or not np.all(np.isfinite(self.r_AE)):
            raise ValueError("r_AE must be a finite 3-vector")
        if self.rotary_axes.shape != (3, 3):
            raise ValueError("rotary_axes must be three 3-vectors")
        norms = np.linalg.norm(self.rotary_axes, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_AXIS_TOL):
            raise ValueError("rotary axes must be unit vectors")
        if self.gravity.shape != (3,) or not np.all(np.isfinite(self.gravity)):
            raise ValueError("gravity must be a finite 3-vector")


@dataclass
class JointState:
    """Joint positions and first two time derivatives, (x, y, z, B, C, A)."""

    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray

    def __post_init__(self):
        for name in ("q", "qd", "qdd"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (6,) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a finite 6-vector")
            setattr(self, name, v)


ORTHO_TOL = 1e-10


@dataclass
class Pose:
    """Position and rotation of the tray frame, resolved in the inertial
    frame; ``rotation`` maps tray coordinates to inertial coordinates."""

    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.rotation = np.asarray(self.rotation, dtype=float)
        R = self.rotation
        if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise ValueError("rotation must be proper (det +1)")


FRAME_INERTIAL = "I"
FRAME_TRAY = "E"


@dataclass
class FrameMotion:
    """Linear/angular velocity and acceleration of a frame, with an explicit
    tag naming the frame the components are resolved in."""

    v: np.ndarray
    w: np.ndarray
    a: np.ndarray
    alpha: np.ndarray
    frame_tag: str

    def __post_init__(self):
        if self.frame_tag not in (FRAME_INERTIAL, FRAME_TRAY):
            raise ValueError(f"unknown frame tag {self.frame_tag!r}")
        for name in ("v", "w", "a", "alpha"):
            vec = np.asarray(getattr(self, name), dtype=float)
            if vec.shape != (3,) or not np.all(np.isfinite(vec)):
                raise ValueError(f"{name} must be a finite 3-vector")
            setattr(self, name, vec)

    def resolved_in(self, frame_tag: str, rotation: np.ndarray) -> "FrameMotion":
        """Re-express the components in another frame.

        ``rotation`` is the tray-to-inertial rotation (Pose.rotation)
        regardless of direction of travel.
        """
        if frame_tag == self.frame_tag:
            return FrameMotion(self.v, self.w, self.a, self.alpha, self.frame_tag)
        R = np.asarray(rotation, dtype=float)
        M = R if frame_tag == FRAME_INERTIAL else R.T
        return FrameMotion(M @ self.v, M @ self.w, M @ self.a, M @ self.alpha, frame_tag)


def rotary_chain_kernel(axes: np.ndarray, q_rot, qd_rot=None, qdd_rot=None):
    """Rotation, angular velocity, and angular acceleration of the tray,
    accumulated along the rotary chain; generic over the scalar type.

    Returns (R, w, alpha) with w/alpha in inertial coordinates; rate terms
    are skipped when no rates are supplied.
    """
    R = IDENTITY3
    w = ZERO3
    alpha = ZERO3
    with_rates = qd_rot is not None
    for i in range(3):
        axis = tuple(float(c) for c in axes[i])
        if with_rates:
            world_axis = g.matvec(R, axis)
            axis_rate = g.vscale(world_axis, qd_rot[i])
            alpha = g.vadd(alpha, g.vadd(g.vscale(world_axis, qdd_rot[i]), g.cross(w, axis_rate)))
            w = g.vadd(w, axis_rate)
        R = g.matmul(R, g.rotation_about(axis, q_rot[i]))
    return R, w, alpha


def frame_motion_kernel(r_AE, axes, q, qd, qdd):
    """Velocity/acceleration of the tray frame from 6-tuples of joint
    scalars; output resolved in the tray frame.

    Returns (R, v_E, w_E, a_E, alpha_E).
    """
    R, w, alpha = rotary_chain_kernel(axes, q[3:6], qd[3:6], qdd[3:6])
    arm = g.matvec(R, tuple(float(c) for c in r_AE))
    v = g.vadd((qd[0], qd[1], qd[2]), g.cross(w, arm))
    a = g.vadd(
        (qdd[0], qdd[1], qdd[2]),
        g.vadd(g.cross(alpha, arm), g.cross(w, g.cross(w, arm))),
    )
    return (
        R,
        g.mat_t_vec(R, v),
        g.mat_t_vec(R, w),
        g.mat_t_vec(R, a),
        g.mat_t_vec(R, alpha),
    )


def forward_frame_E(model: RobotModel, q: np.ndarray) -> Pose:
    """Pose of the tray frame for a joint position vector."""
    q = np.asarray(q, dtype=float)
    if q.shape != (6,) or not np.all(np.isfinite(q)):
        raise ValueError("q must be a finite 6-vector")
    R, _, _ = rotary_chain_kernel(model.rotary_axes, tuple(q[3:6]))
    Rm = g.as_matrix(R)
    return Pose(q[:3] + Rm @ model.r_AE, Rm)


def frame_motion_E(model: RobotModel, js: JointState) -> FrameMotion:
    """Velocity and acceleration of the tray frame, resolved in the tray
    frame (the frame the contact-wrench constraints are written in)."""
    _, v, w, a, alpha = frame_motion_kernel(
        model.r_AE, model.rotary_axes, tuple(js.q), tuple(js.qd), tuple(js.qdd)
    )
    return FrameMotion(g.as_vector(v), g.as_vector(w), g.as_vector(a), g.as_vector(alpha), FRAME_TRAY)
