"""Direct multiple-shooting transcription of the time-optimal transport task.

The 16-dimensional state stacks the path-parameter chain (sigma and two
time derivatives), the rotary-joint chain (positions, velocities,
accelerations), and the pendulum state; the 4 inputs are the piecewise-
constant jerks of the path parameter and the rotary joints.  The total
time is free: the shooting grid is uniform with step ``t_total / N`` and
the end time is itself a decision variable.

Variable layout of the NLP vector: ``[t_total, x_0 .. x_N, u_0 .. u_{N-1}]``.
Boundary conditions are imposed by pinning the affected state variables
(equal lower and upper bounds); the equality-constraint vector carries the
16 N shooting defects only.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import generic as g
from .contact import CupParams, constraint_kernel, wrench_kernel
from .dual import Dual, seed_batch, tangent_of, value_of
from .kinematics import RobotModel, frame_motion_kernel
from .path import PathSpec, axis_path_lengths, joint_chain_components, path_components
from .pendulum import (
    PendulumParams,
    PendulumSingularityError,
    SINGULARITY_GUARD,
    pendulum_accel_kernel,
)
from .solver import NlpSolution, PointEval

STATE_DIM = 16
INPUT_DIM = 4

STATE_NAMES = (
    "sigma", "sigma_d", "sigma_dd",
    "q_B", "q_C", "q_A",
    "qd_B", "qd_C", "qd_A",
    "qdd_B", "qdd_C", "qdd_A",
    "phi", "theta", "phi_d", "theta_d",
)

# q_L ordering is (z, x, y); these map into the 6-joint (x, y, z, B, C, A)
# convention of the robot limits.
_QL_AXES = ("z", "x", "y")
_QL_JOINT_INDEX = (2, 0, 1)

INEQ_ROW_NAMES = (
    ("lift", "slip", "tip")
    + tuple(f"qL_{ax}_pos_{side}" for side in ("ub", "lb") for ax in _QL_AXES)
    + tuple(f"qL_{ax}_vel_{side}" for side in ("ub", "lb") for ax in _QL_AXES)
    + tuple(f"qL_{ax}_acc_{side}" for side in ("ub", "lb") for ax in _QL_AXES)
)
ROWS_PER_NODE = len(INEQ_ROW_NAMES)

INEQ_ROW_FAMILY = (
    ("lift", "slip", "tip")
    + ("joint_position",) * 6
    + ("joint_velocity",) * 6
    + ("joint_acceleration",) * 6
)


@dataclass
class ModelSet:
    """Everything the dynamics and constraints need, bundled."""

    robot: RobotModel
    path: PathSpec
    cup: CupParams
    fluid: PendulumParams


@dataclass
class OcpState:
    """State of the shooting dynamics: path-parameter chain, rotary chain,
    pendulum state."""

    sigma: float = 0.0
    sigma_d: float = 0.0
    sigma_dd: float = 0.0
    x_R: np.ndarray = field(default_factory=lambda: np.zeros(9))
    x_F: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        self.x_R = np.asarray(self.x_R, dtype=float)
        self.x_F = np.asarray(self.x_F, dtype=float)
        if self.x_R.shape != (9,) or self.x_F.shape != (4,):
            raise ValueError("x_R must have 9 entries and x_F four")
        if not np.all(np.isfinite(self.as_vector())):
            raise ValueError("state must be finite")

    def as_vector(self) -> np.ndarray:
        return np.concatenate(([self.sigma, self.sigma_d, self.sigma_dd], self.x_R, self.x_F))

    @classmethod
    def from_vector(cls, x) -> "OcpState":
        x = np.asarray(x, dtype=float)
        if x.shape != (STATE_DIM,):
            raise ValueError(f"state vector must have {STATE_DIM} entries")
        return cls(float(x[0]), float(x[1]), float(x[2]), x[3:12].copy(), x[12:16].copy())


@dataclass
class OcpInput:
    """Piecewise-constant jerk inputs."""

    sigma_ddd: float = 0.0
    q_R_ddd: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.q_R_ddd = np.asarray(self.q_R_ddd, dtype=float)
        if self.q_R_ddd.shape != (3,):
            raise ValueError("q_R_ddd must have 3 entries")
        if not np.all(np.isfinite(self.as_vector())):
            raise ValueError("input must be finite")

    def as_vector(self) -> np.ndarray:
        return np.concatenate(([self.sigma_ddd], self.q_R_ddd))

    @classmethod
    def from_vector(cls, u) -> "OcpInput":
        u = np.asarray(u, dtype=float)
        if u.shape != (INPUT_DIM,):
            raise ValueError(f"input vector must have {INPUT_DIM} entries")
        return cls(float(u[0]), u[1:4].copy())


@dataclass
class BoundaryConditions:
    """Rest-to-rest boundary handling; every pin is individually
    toggleable.  The final rotary position is always free."""

    start_sigma: bool = True
    start_sigma_rates: bool = True
    start_rotary_position: bool = True
    start_rotary_rates: bool = True
    start_fluid_rest: bool = True
    end_sigma: bool = True
    end_sigma_rates: bool = True
    end_rotary_rates: bool = True
    end_fluid_rest: bool = True


@dataclass
class OcpConfig:
    """Transcription parameters: grid size, cost weights, chain bounds."""

    n_intervals: int = 100
    time_weight: float = 1.0
    input_weight: float = 1e-4
    t_total_bounds_s: tuple[float, float] = (0.05, 60.0)
    sigma_rate_max: float = 5.0
    sigma_accel_max: float = 50.0
    sigma_jerk_max: float = 100.0
    midpoint_constraints: bool = False
    enforce_fluid_bounds: bool = True
    guess_time_factor: float = 1.5
    boundary: BoundaryConditions = field(default_factory=BoundaryConditions)

    def __post_init__(self):
        if self.n_intervals < 2:
            raise ValueError("need at least 2 shooting intervals")
        if self.time_weight <= 0.0:
            raise ValueError("time weight must be positive")
        if self.input_weight < 0.0:
            raise ValueError("input weight cannot be negative")
        lo, hi = self.t_total_bounds_s
        if not (0.0 < lo < hi):
            raise ValueError("end-time bounds must satisfy 0 < lower < upper")
        for name in ("sigma_rate_max", "sigma_accel_max", "sigma_jerk_max", "guess_time_factor"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


class _Kernels:
    """Plain-float views of the model parameters for the generic kernels."""

    def __init__(self, models: ModelSet):
        self.path = models.path
        robot = models.robot
        self.r_AE = tuple(float(c) for c in robot.r_AE)
        self.axes = robot.rotary_axes
        self.gravity_I = tuple(float(c) for c in robot.gravity)
        cup = models.cup
        self.cup_mass = float(cup.total_mass_kg)
        self.com = tuple(float(c) for c in cup.com_offset_m)
        self.inertia = tuple(tuple(float(cup.inertia_com_kgm2[i, j]) for j in range(3)) for i in range(3))
        self.mu0 = float(cup.friction_coefficient)
        self.r_o = float(cup.footprint_radius_m)
        self.fluid = models.fluid
        self.pivot = tuple(float(c) for c in models.fluid.pivot_offset_m)
        limits = robot.joint_limits
        take = list(_QL_JOINT_INDEX)
        self.qL_pos_lb = limits.position.lower[take]
        self.qL_pos_ub = limits.position.upper[take]
        self.qL_vel_lb = limits.velocity.lower[take]
        self.qL_vel_ub = limits.velocity.upper[take]
        self.qL_acc_lb = limits.acceleration.lower[take]
        self.qL_acc_ub = limits.acceleration.upper[take]


def _tray_motion(kern: _Kernels, x):
    """Frame motion of the tray and pivot plus gravity in tray axes, from
    state scalars; shared by dynamics and constraint kernels."""
    sigma, sigma_d, sigma_dd = x[0], x[1], x[2]
    qL, qLd, qLdd, _ = joint_chain_components(kern.path, sigma, sigma_d, sigma_dd, 0.0)
    q6 = (qL[1], qL[2], qL[0], x[3], x[4], x[5])
    qd6 = (qLd[1], qLd[2], qLd[0], x[6], x[7], x[8])
    qdd6 = (qLdd[1], qLdd[2], qLdd[0], x[9], x[10], x[11])
    R, vE, wE, aE, alE = frame_motion_kernel(kern.r_AE, kern.axes, q6, qd6, qdd6)
    gE = g.mat_t_vec(R, kern.gravity_I)
    return (qL, qLd, qLdd), (vE, wE, aE, alE), gE


def state_derivative_kernel(kern: _Kernels, x, u):
    """Right-hand side of the shooting dynamics; generic over scalars."""
    _, (vE, wE, aE, alE), gE = _tray_motion(kern, x)
    o = kern.pivot
    vP = g.vadd(vE, g.cross(wE, o))
    aP = g.vadd(aE, g.vadd(g.cross(alE, o), g.cross(wE, g.cross(wE, o))))
    phi_dd, theta_dd = pendulum_accel_kernel(
        kern.fluid, x[12], x[13], x[14], x[15], vP, wE, aP, alE, gE
    )
    return (
        x[1], x[2], u[0],
        x[6], x[7], x[8],
        x[9], x[10], x[11],
        u[1], u[2], u[3],
        x[14], x[15], phi_dd, theta_dd,
    )


def node_constraint_kernel(kern: _Kernels, x):
    """All path-constraint rows at one state, each feasible when <= 0."""
    (qL, qLd, qLdd), (vE, wE, aE, alE), gE = _tray_motion(kern, x)
    f, M = wrench_kernel(kern.cup_mass, kern.com, kern.inertia, vE, wE, aE, alE, gE)
    rows = list(constraint_kernel(f, M, kern.mu0, kern.r_o))
    for chain, lb, ub in (
        (qL, kern.qL_pos_lb, kern.qL_pos_ub),
        (qLd, kern.qL_vel_lb, kern.qL_vel_ub),
        (qLdd, kern.qL_acc_lb, kern.qL_acc_ub),
    ):
        rows.extend(chain[i] - ub[i] for i in range(3))
        rows.extend(lb[i] - chain[i] for i in range(3))
    return tuple(rows)


def _axpy(x, k, s):
    return tuple(x[i] + s * k[i] for i in range(STATE_DIM))


def rk4_step_kernel(kern: _Kernels, x, u, h):
    """One classical Runge-Kutta step with the input held constant."""
    half = h * 0.5
    k1 = state_derivative_kernel(kern, x, u)
    k2 = state_derivative_kernel(kern, _axpy(x, k1, half), u)
    k3 = state_derivative_kernel(kern, _axpy(x, k2, half), u)
    k4 = state_derivative_kernel(kern, _axpy(x, k3, h), u)
    sixth = h * (1.0 / 6.0)
    return tuple(
        x[i] + sixth * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]) for i in range(STATE_DIM)
    )


def _guard_batch_theta(theta_values) -> None:
    tv = np.asarray(theta_values)
    if np.any(np.abs(tv) >= SINGULARITY_GUARD) or not np.all(np.isfinite(tv)):
        raise PendulumSingularityError("pendulum angle left the valid range during integration")


def state_derivative(x: OcpState, u: OcpInput, models: ModelSet) -> np.ndarray:
    """Time derivative of the stacked state at one point."""
    kern = _Kernels(models)
    _guard_batch_theta(x.x_F[1])
    d = state_derivative_kernel(kern, tuple(x.as_vector()), tuple(u.as_vector()))
    return np.array([float(v) for v in d])


def rk4_step(x: OcpState, u: OcpInput, h: float, models: ModelSet) -> OcpState:
    """Advance the state by one fixed step of size ``h > 0``."""
    if h <= 0.0:
        raise ValueError("step size must be positive")
    kern = _Kernels(models)
    _guard_batch_theta(x.x_F[1])
    out = rk4_step_kernel(kern, tuple(x.as_vector()), tuple(u.as_vector()), float(h))
    return OcpState.from_vector(np.array([float(v) for v in out]))


class NlpLayoutError(ValueError):
    """Variable vector does not match the transcription layout."""


class Nlp:
    """The transcribed NLP: layout, bounds, and batched evaluation.

    Implements the solver's problem contract (``n``, ``lower``, ``upper``,
    ``evaluate``); constraint evaluation is vectorized across intervals,
    which is also the concurrency story: every per-interval function is
    pure, so callers may evaluate intervals concurrently.
    """

    def __init__(self, cfg: OcpConfig, models: ModelSet):
        self.cfg = cfg
        self.models = models
        self._kern = _Kernels(models)
        N = cfg.n_intervals
        self.n = 1 + STATE_DIM * (N + 1) + INPUT_DIM * N
        self.n_defects = STATE_DIM * N
        self.n_node_rows = ROWS_PER_NODE * (N + 1)
        self.n_ineq = self.n_node_rows + (ROWS_PER_NODE * N if cfg.midpoint_constraints else 0)
        self.lower, self.upper = self._build_bounds()

    # -- layout ------------------------------------------------------------

    @property
    def n_intervals(self) -> int:
        return self.cfg.n_intervals

    def _states_view(self, z: np.ndarray) -> np.ndarray:
        N = self.cfg.n_intervals
        return z[1 : 1 + STATE_DIM * (N + 1)].reshape(N + 1, STATE_DIM)

    def _inputs_view(self, z: np.ndarray) -> np.ndarray:
        N = self.cfg.n_intervals
        return z[1 + STATE_DIM * (N + 1) :].reshape(N, INPUT_DIM)

    def pack(self, t_total: float, X: np.ndarray, U: np.ndarray) -> np.ndarray:
        N = self.cfg.n_intervals
        if X.shape != (N + 1, STATE_DIM) or U.shape != (N, INPUT_DIM):
            raise NlpLayoutError("state or input arrays have the wrong shape")
        return np.concatenate(([float(t_total)], X.ravel(), U.ravel()))

    def unpack(self, z: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.n,):
            raise NlpLayoutError(f"variable vector must have {self.n} entries, got {z.shape}")
        return float(z[0]), self._states_view(z).copy(), self._inputs_view(z).copy()

    # -- bounds ------------------------------------------------------------

    def _state_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        cfg = self.cfg
        limits = self.models.robot.joint_limits
        fluid = self.models.fluid
        lb = np.empty(STATE_DIM)
        ub = np.empty(STATE_DIM)
        lb[0], ub[0] = 0.0, 1.0
        lb[1], ub[1] = 0.0, cfg.sigma_rate_max  # the path is traversed forward once
        lb[2], ub[2] = -cfg.sigma_accel_max, cfg.sigma_accel_max
        lb[3:6], ub[3:6] = limits.position.lower[3:6], limits.position.upper[3:6]
        lb[6:9], ub[6:9] = limits.velocity.lower[3:6], limits.velocity.upper[3:6]
        lb[9:12], ub[9:12] = limits.acceleration.lower[3:6], limits.acceleration.upper[3:6]
        if cfg.enforce_fluid_bounds:
            lb[12:14], ub[12:14] = -fluid.angle_limit_rad, fluid.angle_limit_rad
            lb[14:16], ub[14:16] = -fluid.rate_limit_radps, fluid.rate_limit_radps
        else:
            guard = SINGULARITY_GUARD - 0.1
            lb[12:14], ub[12:14] = -guard, guard
            lb[14:16], ub[14:16] = -100.0, 100.0
        return lb, ub

    def _build_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        cfg = self.cfg
        N = cfg.n_intervals
        limits = self.models.robot.joint_limits
        lb = np.empty(self.n)
        ub = np.empty(self.n)
        lb[0], ub[0] = cfg.t_total_bounds_s
        x_lb, x_ub = self._state_bounds()
        L = self._states_view(lb)
        U_ = self._states_view(ub)
        L[:] = x_lb
        U_[:] = x_ub
        u_lb = np.concatenate(([-cfg.sigma_jerk_max], limits.jerk.lower[3:6]))
        u_ub = np.concatenate(([cfg.sigma_jerk_max], limits.jerk.upper[3:6]))
        self._inputs_view(lb)[:] = u_lb
        self._inputs_view(ub)[:] = u_ub

        def pin(node: int, idx, value) -> None:
            L[node, idx] = value
            U_[node, idx] = value

        bc = cfg.boundary
        if bc.start_sigma:
            pin(0, 0, 0.0)
        if bc.start_sigma_rates:
            pin(0, [1, 2], 0.0)
        if bc.start_rotary_position:
            pin(0, [3, 4, 5], 0.0)
        if bc.start_rotary_rates:
            pin(0, [6, 7, 8, 9, 10, 11], 0.0)
        if bc.start_fluid_rest:
            pin(0, [12, 13, 14, 15], 0.0)
        if bc.end_sigma:
            pin(N, 0, 1.0)
        if bc.end_sigma_rates:
            pin(N, [1, 2], 0.0)
        if bc.end_rotary_rates:
            pin(N, [6, 7, 8, 9, 10, 11], 0.0)
        if bc.end_fluid_rest:
            pin(N, [12, 13, 14, 15], 0.0)
        return lb, ub

    def variable_scales(self, init: np.ndarray) -> np.ndarray:
        """Bound-range scaling for the states and inputs; the free end time
        is scaled by its initial guess."""
        s = np.ones(self.n)
        span = self.upper - self.lower
        finite = np.isfinite(span) & (span > 0)
        s[finite] = 0.5 * span[finite]
        s[0] = max(float(init[0]), 0.1)
        return s

    def _node_row_scales(self) -> np.ndarray:
        """Characteristic magnitudes of the node constraint rows, so the
        solver sees rows of comparable size."""
        cup = self.models.cup
        g_mag = float(np.linalg.norm(self.models.robot.gravity))
        f_ref = max(cup.total_mass_kg * g_mag, 1e-6)
        kern = self._kern
        scales = [f_ref, max((cup.friction_coefficient * f_ref) ** 2, 1e-9),
                  max((cup.footprint_radius_m * f_ref) ** 2, 1e-9)]
        for lb, ub in (
            (kern.qL_pos_lb, kern.qL_pos_ub),
            (kern.qL_vel_lb, kern.qL_vel_ub),
            (kern.qL_acc_lb, kern.qL_acc_ub),
        ):
            half = np.maximum(0.5 * (ub - lb), 1e-6)
            scales.extend(half)  # upper rows
            scales.extend(half)  # lower rows
        return np.asarray(scales)

    def constraint_scales(self, init: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Row scales: defects by (guess step length x state span), making
        one unit of scaled defect roughly one state-span per interval;
        inequality rows by their physical magnitudes.  Harmonized rows keep
        the penalty geometry well conditioned and make 'teleporting' state
        through cheap defect violations unprofitable."""
        N = self.cfg.n_intervals
        h0 = max(float(init[0]) / N, 1e-4)
        x_lb, x_ub = self._state_bounds()
        span = np.maximum(0.5 * (x_ub - x_lb), 1e-3)
        s_eq = np.tile(h0 * span, N)
        node = self._node_row_scales()
        s_in = np.tile(node, N + 1)
        if self.cfg.midpoint_constraints:
            s_in = np.concatenate([s_in, np.tile(node, N)])
        return s_eq, s_in

    # -- evaluation ---------------------------------------------------------

    def _batch_states(self, X: np.ndarray, want_jac: bool, width: int = STATE_DIM, offset: int = 0):
        if want_jac:
            return seed_batch(X, width=width, offset=offset)
        return [X[:, j].copy() for j in range(X.shape[1])]

    def evaluate(self, z: np.ndarray, want_jacobians: bool = True) -> PointEval:
        cfg = self.cfg
        N = cfg.n_intervals
        z = np.asarray(z, dtype=float)
        if z.shape != (self.n,):
            raise NlpLayoutError(f"variable vector must have {self.n} entries")
        t_total = float(z[0])
        X = self._states_view(z)
        U = self._inputs_view(z)
        _guard_batch_theta(X[:, 13])

        width = STATE_DIM + INPUT_DIM + 1
        if want_jacobians:
            xs = self._batch_states(X[:-1], True, width=width, offset=0)
            us = self._batch_states(U, True, width=width, offset=STATE_DIM)
            t_seed = np.zeros(width)
            t_seed[width - 1] = 1.0
            tE = Dual(t_total, t_seed)
        else:
            xs = self._batch_states(X[:-1], False)
            us = self._batch_states(U, False)
            tE = t_total
        h = tE * (1.0 / N)

        phi = rk4_step_kernel(self._kern, xs, us, h)
        phi_vals = np.stack([np.broadcast_to(np.asarray(value_of(p), dtype=float), (N,)) for p in phi], axis=1)
        defects = (X[1:] - phi_vals).ravel()

        uu = us[0] * us[0] + us[1] * us[1] + us[2] * us[2] + us[3] * us[3]
        cost_k = h * (cfg.time_weight + cfg.input_weight * uu)
        f = float(np.sum(np.broadcast_to(np.asarray(value_of(cost_k)), (N,))))

        xn = self._batch_states(X, want_jacobians, width=STATE_DIM, offset=0)
        rows = node_constraint_kernel(self._kern, xn)
        node_vals = np.stack(
            [np.broadcast_to(np.asarray(value_of(r), dtype=float), (N + 1,)) for r in rows], axis=1
        )
        c_parts = [node_vals.ravel()]

        mids = None
        if cfg.midpoint_constraints:
            x_mid = rk4_step_kernel(self._kern, xs, us, h * 0.5)
            mids = node_constraint_kernel(self._kern, x_mid)
            mid_vals = np.stack(
                [np.broadcast_to(np.asarray(value_of(r), dtype=float), (N,)) for r in mids], axis=1
            )
            c_parts.append(mid_vals.ravel())
        c_ineq = np.concatenate(c_parts)

        if not want_jacobians:
            return PointEval(f, None, defects, c_ineq, None)

        grad = np.zeros(self.n)
        cost_tan = tangent_of(cost_k, width, batch=N)
        self._inputs_view(grad)[:] += cost_tan[:, STATE_DIM : STATE_DIM + INPUT_DIM]
        grad[0] += float(cost_tan[:, width - 1].sum())

        A = np.stack([tangent_of(p, width, batch=N) for p in phi], axis=1)  # (N, 16, 21)
        B = np.stack([tangent_of(r, STATE_DIM, batch=N + 1) for r in rows], axis=1)  # (N+1, R, 16)
        BM = (
            np.stack([tangent_of(r, width, batch=N) for r in mids], axis=1)
            if mids is not None
            else None
        )

        def jt_product(w_eq: np.ndarray, w_ineq: np.ndarray) -> np.ndarray:
            out = np.zeros(self.n)
            Xg = self._states_view(out)
            Ug = self._inputs_view(out)
            if w_eq.size:
                W = w_eq.reshape(N, STATE_DIM)
                Xg[1:] += W
                G = np.einsum("kij,ki->kj", A, W)
                Xg[:-1] -= G[:, :STATE_DIM]
                Ug -= G[:, STATE_DIM : STATE_DIM + INPUT_DIM]
                out[0] -= float(G[:, width - 1].sum())
            if w_ineq.size:
                WN = w_ineq[: self.n_node_rows].reshape(N + 1, ROWS_PER_NODE)
                Xg += np.einsum("kij,ki->kj", B, WN)
                if BM is not None:
                    WM = w_ineq[self.n_node_rows :].reshape(N, ROWS_PER_NODE)
                    GM = np.einsum("kij,ki->kj", BM, WM)
                    Xg[:-1] += GM[:, :STATE_DIM]
                    Ug += GM[:, STATE_DIM : STATE_DIM + INPUT_DIM]
                    out[0] += float(GM[:, width - 1].sum())
            return out

        return PointEval(f, grad, defects, c_ineq, jt_product)

    def objective(self, z: np.ndarray) -> float:
        return self.evaluate(z, want_jacobians=False).f

    # -- structure ----------------------------------------------------------

    def inequality_row_names(self) -> list[str]:
        names = []
        for k in range(self.cfg.n_intervals + 1):
            names.extend(f"node{k}/{r}" for r in INEQ_ROW_NAMES)
        if self.cfg.midpoint_constraints:
            for k in range(self.cfg.n_intervals):
                names.extend(f"mid{k}/{r}" for r in INEQ_ROW_NAMES)
        return names

    def jacobian_sparsity(self):
        """Boolean structure of the stacked (defects, inequalities)
        Jacobian; block bidiagonal in the shooting variables plus a dense
        column for the free end time."""
        from scipy.sparse import lil_matrix

        N = self.cfg.n_intervals
        S = lil_matrix((self.n_defects + self.n_ineq, self.n), dtype=bool)
        u0 = 1 + STATE_DIM * (N + 1)
        for k in range(N):
            r = STATE_DIM * k
            S[r : r + STATE_DIM, 0] = True
            S[r : r + STATE_DIM, 1 + STATE_DIM * k : 1 + STATE_DIM * (k + 2)] = True
            S[r : r + STATE_DIM, u0 + INPUT_DIM * k : u0 + INPUT_DIM * (k + 1)] = True
        base = self.n_defects
        for k in range(N + 1):
            r = base + ROWS_PER_NODE * k
            S[r : r + ROWS_PER_NODE, 1 + STATE_DIM * k : 1 + STATE_DIM * (k + 1)] = True
        if self.cfg.midpoint_constraints:
            base += self.n_node_rows
            for k in range(N):
                r = base + ROWS_PER_NODE * k
                S[r : r + ROWS_PER_NODE, 0] = True
                S[r : r + ROWS_PER_NODE, 1 + STATE_DIM * k : 1 + STATE_DIM * (k + 1)] = True
                S[r : r + ROWS_PER_NODE, u0 + INPUT_DIM * k : u0 + INPUT_DIM * (k + 1)] = True
        return S.tocsr()


def build_nlp(cfg: OcpConfig, models: ModelSet) -> Nlp:
    """Assemble the shooting NLP for a model set."""
    return Nlp(cfg, models)


def smoothstep_profile(tau: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Quintic ramp 6 tau^5 - 15 tau^4 + 10 tau^3 and its first three
    derivatives in tau; endpoint derivatives vanish through second order."""
    tau = np.asarray(tau, dtype=float)
    s = ((6.0 * tau - 15.0) * tau + 10.0) * tau**3
    s1 = 30.0 * tau**2 * (1.0 - tau) ** 2
    s2 = 60.0 * tau * (1.0 - tau) * (1.0 - 2.0 * tau)
    s3 = 60.0 * (1.0 - 6.0 * tau + 6.0 * tau**2)
    return s, s1, s2, s3


def initial_guess(cfg: OcpConfig, models: ModelSet) -> np.ndarray:
    """Feasible-boundary starting point: quintic-ramp path parameter with
    matching rates, rotary axes and pendulum at rest, inputs from finite
    differences of the ramp, and a velocity-limit time heuristic."""
    nlp = Nlp(cfg, models)
    N = cfg.n_intervals

    lengths = axis_path_lengths(models.path)
    vel = models.robot.joint_limits.velocity
    caps = np.minimum(-vel.lower[:3], vel.upper[:3])[[2, 0, 1]]  # (z, x, y) ordering
    with np.errstate(divide="ignore"):
        per_axis = np.where(lengths > 0, lengths / caps, 0.0)
    t0 = cfg.guess_time_factor * float(per_axis.max())
    if t0 <= 0.0:
        t0 = 1.0
    t0 = float(np.clip(t0, *cfg.t_total_bounds_s))

    tau = np.arange(N + 1) / N
    s, s1, s2, _ = smoothstep_profile(tau)
    X = np.zeros((N + 1, STATE_DIM))
    X[:, 0] = s
    X[:, 1] = s1 / t0
    X[:, 2] = s2 / t0**2
    U = np.zeros((N, INPUT_DIM))
    h = t0 / N
    U[:, 0] = np.diff(X[:, 2]) / h
    z = nlp.pack(t0, X, U)
    return np.clip(z, nlp.lower, nlp.upper)


_DEFAULT_AXES = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


def _quasistatic_tilt(models: ModelSet, t_total: float, sigma, sigma_d, sigma_dd) -> np.ndarray:
    """Rotary-joint profile that keeps the tray normal aligned with the
    effective gravity (gravity minus path acceleration) along a ramp.

    Only meaningful for the default tilt-tilt-yaw axis convention; any
    other convention gets a zero profile.  Returns (n_nodes, 3) rotary
    positions bounded away from the +-pi/2 tilt singularities.
    """
    robot = models.robot
    if np.max(np.abs(robot.rotary_axes - _DEFAULT_AXES)) > 1e-9:
        return np.zeros((sigma.size, 3))
    _, d1, d2, _ = path_components(models.path, sigma)
    ones = np.ones_like(sigma)
    acc = np.stack(
        [np.asarray(d2[i] * sigma_d**2 + d1[i] * sigma_dd, dtype=float) * ones for i in range(3)],
        axis=1,
    )
    d = acc - robot.gravity
    d /= np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-9)
    tilt_cap = np.pi / 2 - 0.2
    q_C = -np.arcsin(np.clip(d[:, 1], -np.sin(tilt_cap), np.sin(tilt_cap)))
    q_B = np.arctan2(d[:, 0], d[:, 2])
    q_B = np.clip(q_B, -tilt_cap, tilt_cap)
    lim = robot.joint_limits.position
    qR = np.stack([q_B, q_C, np.zeros_like(q_B)], axis=1)
    return np.clip(qR, lim.lower[3:6], lim.upper[3:6])


def restore_dynamics(cfg: OcpConfig, models: ModelSet, z0: np.ndarray) -> np.ndarray:
    """Project a starting vector toward the shooting-defect manifold.

    Keeps the ramp shape of the path parameter, adds a quasi-static tray
    tilt that cancels the lateral part of the effective gravity (which is
    what keeps the pendulum and the friction cone calm), and fills the
    node states by clip-propagation: each node is the one-interval
    integration of the previous node, clipped into the variable bounds.
    Defects then equal the clip corrections only, which keeps the first
    solver iterations out of the violently nonlinear regime of a badly
    inconsistent forced pendulum.

    Candidate durations grow from the velocity-heuristic time but stay
    inside the integrator's oscillatory stability window (the pendulum
    turns RK4 unstable once its frequency times the interval length passes
    ~2.8); the candidate with the smallest total clip correction wins.
    Deterministic.
    """
    nlp = Nlp(cfg, models)
    N = cfg.n_intervals
    t_heur, _, _ = nlp.unpack(z0)
    x_lb, x_ub = nlp._state_bounds()

    omega0 = np.sqrt(
        abs(models.robot.gravity[2]) / models.fluid.length_m
    ) if models.fluid.length_m > 0 else 1.0
    t_stable = 2.2 * N / max(omega0, 1e-6)
    lo, hi = cfg.t_total_bounds_s
    t_cap = float(np.clip(max(t_heur, t_stable), lo, hi))

    tau = np.arange(N + 1) / N
    s, s1, s2, _ = smoothstep_profile(tau)

    def propagate(t_try: float):
        h = t_try / N
        X = np.zeros((N + 1, STATE_DIM))
        X[:, 0] = s
        X[:, 1] = s1 / t_try
        X[:, 2] = s2 / t_try**2
        qR = _quasistatic_tilt(models, t_try, X[:, 0], X[:, 1], X[:, 2])
        X[:, 3:6] = qR
        X[1:-1, 6:9] = (qR[2:] - qR[:-2]) / (2.0 * h)
        X[1:-1, 9:12] = (qR[2:] - 2.0 * qR[1:-1] + qR[:-2]) / h**2
        U = np.zeros((N, INPUT_DIM))
        U[:, 0] = np.diff(X[:, 2]) / h
        U[:, 1:4] = np.diff(X[:, 9:12], axis=0) / h
        X[0] = np.clip(X[0], x_lb, x_ub)
        clip_total = 0.0
        x = tuple(X[0])
        for k in range(N):
            try:
                raw = rk4_step_kernel(nlp._kern, x, tuple(U[k]), h)
                raw = np.array([float(v) for v in raw])
            except (PendulumSingularityError, FloatingPointError):
                raw = np.full(STATE_DIM, np.nan)
            if not np.all(np.isfinite(raw)) or abs(raw[13]) >= SINGULARITY_GUARD:
                # explosive interval: fall back to the ramp values
                clipped = np.clip(
                    np.concatenate((X[k + 1, :3], X[k + 1, 3:6], np.zeros(10))), x_lb, x_ub
                )
                clip_total += 1e6
            else:
                clipped = np.clip(raw, x_lb, x_ub)
                clip_total += float(np.abs(raw - clipped).sum())
            X[k + 1] = clipped
            x = tuple(clipped)
        return clip_total, X, U

    best = None
    t_try = min(t_heur, t_cap)
    for _ in range(24):
        score, X, U = propagate(t_try)
        if best is None or score < best[0] - 1e-12:
            best = (score, t_try, X, U)
        if score <= 1e-12 or t_try >= t_cap:
            break
        t_try = min(t_try * 1.3, t_cap)
    _, t_best, X, U = best
    z = nlp.pack(t_best, X, U)
    return np.clip(z, nlp.lower, nlp.upper)


TRAJECTORY_SCHEMA = "traymotion-trajectory-v1"

TRAJECTORY_COLUMNS = (
    ("t", "sigma", "sigma_d", "sigma_dd")
    + tuple(f"q_{j}" for j in ("x", "y", "z", "B", "C", "A"))
    + tuple(f"qd_{j}" for j in ("x", "y", "z", "B", "C", "A"))
    + tuple(f"qdd_{j}" for j in ("x", "y", "z", "B", "C", "A"))
    + ("phi", "theta", "phi_d", "theta_d", "g_lift", "g_slip", "g_tip")
)


class TrajectorySchemaError(ValueError):
    """Trajectory file does not match the documented CSV schema."""


def _joint_arrays(kern: _Kernels, X: np.ndarray):
    """Batched 6-joint position/velocity/acceleration arrays from node
    states, in (x, y, z, B, C, A) ordering."""
    n = X.shape[0]
    qL, qLd, qLdd, _ = joint_chain_components(kern.path, X[:, 0], X[:, 1], X[:, 2], 0.0)

    def assemble(chain, i0):
        cols = [np.broadcast_to(np.asarray(c, dtype=float), (n,)) for c in chain]
        return np.stack([cols[1], cols[2], cols[0], X[:, i0], X[:, i0 + 1], X[:, i0 + 2]], axis=1)

    return assemble(qL, 3), assemble(qLd, 6), assemble(qLdd, 9)


def _node_rows(kern: _Kernels, X: np.ndarray) -> np.ndarray:
    rows = node_constraint_kernel(kern, [X[:, j] for j in range(STATE_DIM)])
    return np.stack(
        [np.broadcast_to(np.asarray(r, dtype=float), (X.shape[0],)) for r in rows], axis=1
    )


@dataclass
class Trajectory:
    """Optimized motion on the shooting grid with recomputed chains and
    residuals; node times are uniform."""

    t_total_s: float
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    residuals: np.ndarray  # (n_nodes, 3): lift, slip, tip
    constraint_rows: np.ndarray | None = None  # (n_nodes, ROWS_PER_NODE)

    def __post_init__(self):
        n = self.times.size
        if self.states.shape != (n, STATE_DIM) or self.inputs.shape != (n - 1, INPUT_DIM):
            raise NlpLayoutError("trajectory arrays do not match the node count")
        spacing = np.diff(self.times)
        if n > 1 and np.max(np.abs(spacing - spacing[0])) > 1e-9 * max(1.0, self.t_total_s):
            raise ValueError("node times must be uniform")

    @property
    def n_intervals(self) -> int:
        return self.times.size - 1

    def node_state(self, k: int) -> OcpState:
        return OcpState.from_vector(self.states[k])

    def node_input(self, k: int) -> OcpInput:
        return OcpInput.from_vector(self.inputs[k])

    def to_csv(self, path: str) -> None:
        """Write the versioned node table; the file appears atomically."""
        table = np.column_stack(
            [
                self.times,
                self.states[:, 0:3],
                self.q,
                self.qd,
                self.qdd,
                self.states[:, 12:16],
                self.residuals,
            ]
        )
        lines = [f"# {TRAJECTORY_SCHEMA}", ",".join(TRAJECTORY_COLUMNS)]
        lines.extend(",".join(f"{v:.17g}" for v in row) for row in table)
        _write_text_atomic(path, "\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path: str) -> "Trajectory":
        with open(path, "r") as fh:
            first = fh.readline().strip()
            if first != f"# {TRAJECTORY_SCHEMA}":
                raise TrajectorySchemaError(
                    f"{path}: expected schema line '# {TRAJECTORY_SCHEMA}', found {first!r}"
                )
            header = fh.readline().strip()
            if tuple(header.split(",")) != TRAJECTORY_COLUMNS:
                raise TrajectorySchemaError(f"{path}: column header does not match the schema")
            try:
                table = np.loadtxt(fh, delimiter=",", ndmin=2)
            except ValueError as exc:
                raise TrajectorySchemaError(f"{path}: {exc}") from exc
        if table.shape[0] < 2 or table.shape[1] != len(TRAJECTORY_COLUMNS):
            raise TrajectorySchemaError(f"{path}: need >= 2 rows of {len(TRAJECTORY_COLUMNS)} columns")
        times = table[:, 0]
        q = table[:, 4:10]
        qd = table[:, 10:16]
        qdd = table[:, 16:22]
        states = np.column_stack(
            [table[:, 1:4], q[:, 3:6], qd[:, 3:6], qdd[:, 3:6], table[:, 22:26]]
        )
        t_total = float(times[-1])
        n_int = times.size - 1
        h = t_total / n_int
        if h <= 0:
            raise TrajectorySchemaError(f"{path}: node times must increase")
        # piecewise-constant jerk makes accelerations piecewise linear, so
        # the inputs are recoverable exactly from node differences
        inputs = np.column_stack([np.diff(states[:, j]) / h for j in (2, 9, 10, 11)])
        return cls(
            t_total_s=t_total,
            times=times,
            states=states,
            inputs=inputs,
            q=q,
            qd=qd,
            qdd=qdd,
            residuals=table[:, 26:29],
        )


def extract_trajectory(solution, cfg: OcpConfig, models: ModelSet) -> Trajectory:
    """Unpack an NLP solution and recompute every per-node quantity from
    the raw variables."""
    z = solution.z if isinstance(solution, NlpSolution) else np.asarray(solution, dtype=float)
    nlp = Nlp(cfg, models)
    t_total, X, U = nlp.unpack(z)
    N = cfg.n_intervals
    times = t_total * np.arange(N + 1) / N
    q, qd, qdd = _joint_arrays(nlp._kern, X)
    rows = _node_rows(nlp._kern, X)
    return Trajectory(
        t_total_s=t_total,
        times=times,
        states=X,
        inputs=U,
        q=q,
        qd=qd,
        qdd=qdd,
        residuals=rows[:, 0:3],
        constraint_rows=rows,
    )


def _write_text_atomic(path: str, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see a
    partial file."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise

