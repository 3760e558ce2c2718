"""Contact wrench of the cup on the tray and the transport constraints.

The cup is treated as a rigid body locked to the tray; the wrench the tray
must exert to keep it there follows from a Newton-Euler balance.  Keeping
the cup in place requires the normal force to press (no lifting), the
tangential force to stay inside the friction cone (no slipping), and the
overturning torque to stay inside the footprint (no tipping).  All three
are expressed in squared, division-free form so they stay differentiable
at zero force.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import generic as g
from .kinematics import FRAME_TRAY, FrameMotion


def cylinder_inertia(mass: float, radius: float, height: float) -> np.ndarray:
    """Inertia of a solid cylinder about its center of mass, axis along z."""
    ixx = mass * (3.0 * radius**2 + height**2) / 12.0
    izz = mass * radius**2 / 2.0
    return np.diag([ixx, ixx, izz])


@dataclass
class CupParams:
    """Rigid-body and interface parameters of the cup.

    ``added_point_mass_kg`` optionally lumps the liquid as a point mass at
    the center of mass for wrench purposes; it is zero by default so the
    liquid moves the pendulum, not the wrench.
    """

    mass_kg: float = 0.3
    com_offset_m: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.05]))
    inertia_com_kgm2: np.ndarray | None = None
    friction_coefficient: float = 0.35
    footprint_radius_m: float = 0.05
    added_point_mass_kg: float = 0.0

    def __post_init__(self):
        self.com_offset_m = np.asarray(self.com_offset_m, dtype=float)
        if self.mass_kg <= 0.0:
            raise ValueError("cup mass must be positive")
        if self.added_point_mass_kg < 0.0:
            raise ValueError("added point mass cannot be negative")
        if not (0.0 < self.friction_coefficient < np.tan(np.pi / 2 - 1e-9)):
            raise ValueError("friction coefficient must be positive (tan of a friction angle)")
        if self.footprint_radius_m <= 0.0:
            raise ValueError("footprint radius must be positive")
        if self.com_offset_m.shape != (3,) or not np.all(np.isfinite(self.com_offset_m)):
            raise ValueError("com offset must be a finite 3-vector")
        if self.inertia_com_kgm2 is None:
            self.inertia_com_kgm2 = cylinder_inertia(self.mass_kg, self.footprint_radius_m, 0.1)
        self.inertia_com_kgm2 = np.asarray(self.inertia_com_kgm2, dtype=float)
        I = self.inertia_com_kgm2
        if I.shape != (3, 3) or np.max(np.abs(I - I.T)) > 1e-12 or np.any(np.linalg.eigvalsh(I) <= 0):
            raise ValueError("inertia must be symmetric positive definite")

    @property
    def total_mass_kg(self) -> float:
        return self.mass_kg + self.added_point_mass_kg


@dataclass
class Wrench:
    """Contact force and torque on the cup at the contact point, resolved
    in the tray frame."""

    f: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        self.M = np.asarray(self.M, dtype=float)
        if not (np.all(np.isfinite(self.f)) and np.all(np.isfinite(self.M))):
            raise ValueError("wrench components must be finite")


def wrench_kernel(mass, com, inertia, v_E, w_E, a_E, alpha_E, g_E):
    """Newton-Euler wrench for a body rigidly following the tray; generic
    over the scalar type.  All vectors resolved in the tray frame."""
    del v_E  # the locked body feels only accelerations and rotation rates
    a_com = g.vadd(a_E, g.vadd(g.cross(alpha_E, com), g.cross(w_E, g.cross(w_E, com))))
    f = g.vscale(g.vsub(a_com, g_E), mass)
    Iw = g.matvec(inertia, w_E)
    Ialpha = g.matvec(inertia, alpha_E)
    M = g.vadd(g.vadd(Ialpha, g.cross(w_E, Iw)), g.cross(com, f))
    return f, M


def contact_wrench(cup: CupParams, motion: FrameMotion, gravity_in_E: np.ndarray) -> Wrench:
    """Contact wrench for a tray-frame motion and gravity resolved in the
    tray frame."""
    if motion.frame_tag != FRAME_TRAY:
        raise ValueError("contact wrench needs the motion resolved in the tray frame")
    gE = np.asarray(gravity_in_E, dtype=float)
    com = tuple(float(c) for c in cup.com_offset_m)
    inertia = tuple(tuple(float(cup.inertia_com_kgm2[i, j]) for j in range(3)) for i in range(3))
    f, M = wrench_kernel(
        cup.total_mass_kg,
        com,
        inertia,
        tuple(motion.v),
        tuple(motion.w),
        tuple(motion.a),
        tuple(motion.alpha),
        tuple(gE),
    )
    return Wrench(g.as_vector(f), g.as_vector(M))


def constraint_kernel(f, M, mu0: float, r_o: float):
    """Lift/slip/tip residuals, each feasible when <= 0.

    Squared forms: with f_z >= 0 they are equivalent to the tangential
    force staying below mu0*f_z and the overturning torque below r_o*f_z.
    """
    g_lift = -f[2]
    g_slip = f[0] * f[0] + f[1] * f[1] - (mu0 * mu0) * (f[2] * f[2])
    g_tip = M[0] * M[0] + M[1] * M[1] - (r_o * r_o) * (f[2] * f[2])
    return g_lift, g_slip, g_tip


def task_constraints(wrench: Wrench, cup: CupParams) -> np.ndarray:
    """Residual vector (lift, slip, tip); transport is safe when all <= 0."""
    gl, gs, gt = constraint_kernel(
        tuple(wrench.f), tuple(wrench.M), cup.friction_coefficient, cup.footprint_radius_m
    )
    return np.array([float(gl), float(gs), float(gt)])
