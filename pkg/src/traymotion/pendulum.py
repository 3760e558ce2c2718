"""Damped spherical-pendulum surrogate for the liquid in the cup.

The liquid is lumped into a point mass hanging on a massless rod below a
pivot that rides with the tray.  Tilt angles (phi about the pivot frame's
x-axis, then theta about the resulting y-axis) equal the liquid-surface
tilt, so bounding them bounds sloshing.  Wall friction and internal
dissipation enter as viscous damping on the mass velocity relative to the
pivot frame.

The closed-form accelerations below are the Euler-Lagrange equations of
the point mass projected on the two angles; the test suite re-derives them
independently from the Lagrangian.  With ``u`` the rod vector in pivot
coordinates, the generalized mass matrix is ``m L^2 diag(cos^2 theta, 1)``,
singular at theta = +-pi/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import generic as g
from .dual import cos, sin, value_of
from .kinematics import FrameMotion

SINGULARITY_GUARD = np.pi / 2 - 1e-6


class PendulumSingularityError(ValueError):
    """theta reached the parameterization singularity at +-pi/2."""


@dataclass
class PendulumParams:
    """Lumped-parameter model of the liquid plus its motion bounds."""

    length_m: float = 0.027
    mass_kg: float = 0.55
    damping_kg_per_s: float = 0.2
    angle_limit_rad: np.ndarray = field(default_factory=lambda: np.array([np.pi / 18, np.pi / 18]))
    rate_limit_radps: np.ndarray = field(
        default_factory=lambda: np.array([5 * np.pi / 9, 5 * np.pi / 9])
    )
    pivot_offset_m: np.ndarray | None = None
    fill_height_m: float = 0.06

    def __post_init__(self):
        if self.length_m <= 0.0 or self.mass_kg <= 0.0 or self.damping_kg_per_s < 0.0:
            raise ValueError("need length > 0, mass > 0, damping >= 0")
        self.angle_limit_rad = np.asarray(self.angle_limit_rad, dtype=float)
        self.rate_limit_radps = np.asarray(self.rate_limit_radps, dtype=float)
        if self.angle_limit_rad.shape != (2,) or np.any(self.angle_limit_rad < 0):
            raise ValueError("angle limits must be two non-negative entries")
        if np.any(self.angle_limit_rad >= np.pi / 2):
            raise ValueError("angle limits must stay below pi/2 (parameterization singularity)")
        if self.rate_limit_radps.shape != (2,) or np.any(self.rate_limit_radps < 0):
            raise ValueError("rate limits must be two non-negative entries")
        if self.pivot_offset_m is None:
            self.pivot_offset_m = np.array([0.0, 0.0, self.length_m + self.fill_height_m / 2.0])
        self.pivot_offset_m = np.asarray(self.pivot_offset_m, dtype=float)
        if self.pivot_offset_m.shape != (3,) or not np.all(np.isfinite(self.pivot_offset_m)):
            raise ValueError("pivot offset must be a finite 3-vector")


@dataclass
class PendulumState:
    phi: float
    theta: float
    phi_d: float
    theta_d: float

    def __post_init__(self):
        vals = (self.phi, self.theta, self.phi_d, self.theta_d)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("pendulum state must be finite")
        if abs(self.phi) >= np.pi / 2 or abs(self.theta) >= np.pi / 2:
            raise PendulumSingularityError("pendulum angles left the +-pi/2 range")

    def as_vector(self) -> np.ndarray:
        return np.array([self.phi, self.theta, self.phi_d, self.theta_d])


def pendulum_accel_kernel(params: PendulumParams, phi, theta, phi_d, theta_d, v_P, w_P, a_P, alpha_P, g_P):
    """Angular accelerations (phi_dd, theta_dd); generic over the scalar
    type.  All vector inputs resolved in the pivot frame (tray axes)."""
    del v_P  # rigid-rod dynamics are velocity-free apart from the rates below
    L = params.length_m
    m = params.mass_kg
    d = params.damping_kg_per_s

    sp, cp = sin(phi), cos(phi)
    st, ct = sin(theta), cos(theta)

    u = (-L * st, L * (sp * ct), -L * (cp * ct))
    u_phi = (0.0, L * (cp * ct), L * (sp * ct))
    u_theta = (-L * ct, -L * (sp * st), L * (cp * st))
    # second derivatives of u contracted with the rates
    pd2 = phi_d * phi_d
    td2 = theta_d * theta_d
    cross_rate = 2.0 * (phi_d * theta_d)
    h = (
        L * (st * td2) + 0.0 * pd2,
        -L * ((sp * ct) * pd2) - L * ((cp * st) * cross_rate) - L * ((sp * ct) * td2),
        L * ((cp * ct) * pd2) - L * ((sp * st) * cross_rate) + L * ((cp * ct) * td2),
    )

    rod_rate = g.vadd(g.vscale(u_phi, phi_d), g.vscale(u_theta, theta_d))
    coriolis = g.vscale(g.cross(w_P, rod_rate), 2.0)
    core = g.vadd(
        g.vsub(a_P, g_P),
        g.vadd(
            g.vadd(g.cross(alpha_P, u), g.cross(w_P, g.cross(w_P, u))),
            g.vadd(coriolis, h),
        ),
    )

    mL2 = m * L * L
    ct2 = ct * ct
    rhs_phi = -m * g.dot(u_phi, core) - (d * L * L) * (ct2 * phi_d)
    rhs_theta = -m * g.dot(u_theta, core) - (d * L * L) * theta_d
    return rhs_phi / (mL2 * ct2), rhs_theta / mL2


def _guard_theta(theta) -> None:
    tv = np.asarray(value_of(theta))
    if np.any(np.abs(tv) >= SINGULARITY_GUARD):
        raise PendulumSingularityError(
            f"|theta| reached the singularity guard at pi/2 - 1e-6 (theta={tv!r})"
        )


def pendulum_accel(
    st: PendulumState,
    motion_P: FrameMotion,
    params: PendulumParams,
    gravity_in_P: np.ndarray,
) -> np.ndarray:
    """Angular accelerations of the pendulum under pivot-frame forcing.

    ``motion_P`` and ``gravity_in_P`` must both be resolved in the pivot
    frame (which shares the tray axes); a tilted tray therefore sees a
    rotated gravity vector here.
    """
    _guard_theta(st.theta)
    gP = np.asarray(gravity_in_P, dtype=float)
    acc = pendulum_accel_kernel(
        params,
        st.phi,
        st.theta,
        st.phi_d,
        st.theta_d,
        tuple(motion_P.v),
        tuple(motion_P.w),
        tuple(motion_P.a),
        tuple(motion_P.alpha),
        tuple(gP),
    )
    return np.array([float(acc[0]), float(acc[1])])


def pendulum_energy(st: PendulumState, params: PendulumParams, gravity_magnitude: float) -> float:
    """Total mechanical energy for a pivot at rest, zero at hanging rest.

    Only meaningful while the pivot frame is not moving; the kinetic term
    uses the mass velocity relative to the pivot.
    """
    L = params.length_m
    m = params.mass_kg
    ct = np.cos(st.theta)
    kinetic = 0.5 * m * L * L * (ct * ct * st.phi_d**2 + st.theta_d**2)
    height = L * (1.0 - np.cos(st.phi) * ct)
    return float(kinetic + m * gravity_magnitude * height)
