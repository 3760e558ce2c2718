"""Independent verification of optimized trajectories.

Everything here is recomputed from the raw node states: the jerk inputs
are reconstructed from acceleration differences (exact for the piecewise-
constant-jerk parameterization), the dynamics are re-integrated at a finer
step from every node, and the constraint families are re-evaluated on the
oversampled states.  Cached residuals from the transcription are never
consulted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ocp import (
    INPUT_DIM,
    ModelSet,
    STATE_DIM,
    STATE_NAMES,
    Trajectory,
    _Kernels,
    _joint_arrays,
    node_constraint_kernel,
    rk4_step_kernel,
)
from .pendulum import PendulumSingularityError, SINGULARITY_GUARD

FAMILIES = (
    "lift",
    "slip",
    "tip",
    "fluid_angle",
    "fluid_rate",
    "joint_position",
    "joint_velocity",
    "joint_acceleration",
)


@dataclass
class AuditGates:
    """Pass/fail thresholds for the audit verdict."""

    substeps: int = 20
    oversample: int = 10
    max_fluid_deviation_rad: float = 1e-3
    max_violation: float = 1e-3

    def __post_init__(self):
        if self.substeps < 10:
            raise ValueError("resimulation needs at least 10 substeps")
        if self.oversample < 1:
            raise ValueError("oversample must be at least 1")


@dataclass
class WorstCase:
    residual: float
    time_s: float

    def to_dict(self) -> dict:
        return {"residual": self.residual, "time_s": self.time_s}


@dataclass
class AuditReport:
    """Worst-case findings of the re-simulation and constraint sweep; the
    report is complete even when violations or fatal findings exist."""

    max_defect: np.ndarray  # per state component, (16,)
    fluid_deviation: float  # max |resimulated - node| over the pendulum block
    worst: dict = field(default_factory=dict)  # family -> WorstCase
    fatal: list = field(default_factory=list)
    sample_times: np.ndarray | None = None
    sample_residuals: np.ndarray | None = None  # (n_samples, len(FAMILIES))

    def max_violation(self) -> float:
        worst = max((w.residual for w in self.worst.values()), default=-np.inf)
        return float(max(worst, 0.0))

    def passed(self, gates: AuditGates) -> bool:
        return (
            not self.fatal
            and self.fluid_deviation <= gates.max_fluid_deviation_rad
            and all(w.residual <= gates.max_violation for w in self.worst.values())
        )

    def to_dict(self, gates: AuditGates | None = None) -> dict:
        out = {
            "max_defect_per_state": {
                name: float(v) for name, v in zip(STATE_NAMES, self.max_defect)
            },
            "fluid_resimulation_deviation": float(self.fluid_deviation),
            "worst_per_family": {k: w.to_dict() for k, w in self.worst.items()},
            "fatal_findings": list(self.fatal),
        }
        if gates is not None:
            out["passed"] = self.passed(gates)
            out["gates"] = {
                "substeps": gates.substeps,
                "oversample": gates.oversample,
                "max_fluid_deviation_rad": gates.max_fluid_deviation_rad,
                "max_violation": gates.max_violation,
            }
        return out

    def write_samples_csv(self, path: str) -> None:
        from .ocp import _write_text_atomic

        lines = ["# traymotion-audit-v1", ",".join(("t",) + FAMILIES)]
        if self.sample_times is not None:
            for t, row in zip(self.sample_times, self.sample_residuals):
                lines.append(",".join(f"{v:.17g}" for v in ((t,) + tuple(row))))
        _write_text_atomic(path, "\n".join(lines) + "\n")


def reconstructed_inputs(traj: Trajectory) -> np.ndarray:
    """Jerk inputs from node acceleration differences; exact under the
    piecewise-constant-jerk parameterization."""
    h = traj.t_total_s / traj.n_intervals
    X = traj.states
    return np.column_stack([np.diff(X[:, j]) / h for j in (2, 9, 10, 11)])


def _integrate_fine(traj: Trajectory, models: ModelSet, substeps: int):
    """Batched re-integration from every node; returns fine states of shape
    (substeps + 1, N, 16) plus the per-interval sample times, or records a
    fatal finding on a pendulum singularity."""
    kern = _Kernels(models)
    N = traj.n_intervals
    h = traj.t_total_s / N
    dt = h / substeps
    U = reconstructed_inputs(traj)
    us = [U[:, j].copy() for j in range(INPUT_DIM)]
    stages = np.empty((substeps + 1, N, STATE_DIM))
    stages[0] = traj.states[:-1]
    x = [stages[0][:, j].copy() for j in range(STATE_DIM)]
    for s in range(substeps):
        theta = x[13]
        if np.any(~np.isfinite(theta)) or np.any(np.abs(theta) >= SINGULARITY_GUARD):
            raise PendulumSingularityError(
                f"pendulum singularity during re-simulation at substep {s}"
            )
        x = list(rk4_step_kernel(kern, x, us, dt))
        stages[s + 1] = np.stack([np.broadcast_to(np.asarray(c, float), (N,)) for c in x], axis=1)
    return stages, dt


def resimulate(traj: Trajectory, models: ModelSet, substeps: int) -> AuditReport:
    """Re-integrate each interval at step h/substeps and report the worst
    per-component deviation at the next node."""
    if substeps < 10:
        raise ValueError("resimulation needs at least 10 substeps")
    report = AuditReport(max_defect=np.zeros(STATE_DIM), fluid_deviation=0.0)
    try:
        stages, _ = _integrate_fine(traj, models, substeps)
    except PendulumSingularityError as exc:
        report.fatal.append(str(exc))
        report.max_defect = np.full(STATE_DIM, np.inf)
        report.fluid_deviation = np.inf
        return report
    deviation = np.abs(stages[-1] - traj.states[1:])
    report.max_defect = deviation.max(axis=0)
    report.fluid_deviation = float(deviation[:, 12:16].max())
    return report


def _family_rows(kern: _Kernels, models: ModelSet, flat: np.ndarray) -> np.ndarray:
    """Residuals of every constraint family at a batch of states, one
    column per family in FAMILIES order."""
    rows = np.stack(
        [
            np.broadcast_to(np.asarray(r, float), (flat.shape[0],))
            for r in node_constraint_kernel(kern, [flat[:, j] for j in range(STATE_DIM)])
        ],
        axis=1,
    )
    fluid = models.fluid
    angles = np.abs(flat[:, 12:14]) - fluid.angle_limit_rad
    rates = np.abs(flat[:, 14:16]) - fluid.rate_limit_radps
    limits = models.robot.joint_limits
    q, qd, qdd = _joint_arrays(kern, flat)

    def box(vals, bounds):
        over = np.maximum(vals - bounds.upper, bounds.lower - vals)
        return over.max(axis=1)

    return np.column_stack(
        [
            rows[:, 0],
            rows[:, 1],
            rows[:, 2],
            angles.max(axis=1),
            rates.max(axis=1),
            box(q, limits.position),
            box(qd, limits.velocity),
            box(qdd, limits.acceleration),
        ]
    )


def audit_constraints(traj: Trajectory, models: ModelSet, oversample: int) -> AuditReport:
    """Evaluate every constraint family on a grid ``oversample`` times
    denser than the nodes, with inter-node states from re-simulation
    rather than interpolation."""
    if oversample < 1:
        raise ValueError("oversample must be at least 1")
    kern = _Kernels(models)
    N = traj.n_intervals
    report = AuditReport(max_defect=np.zeros(STATE_DIM), fluid_deviation=0.0)
    substeps = max(oversample, 10)
    try:
        stages, dt = _integrate_fine(traj, models, substeps)
    except PendulumSingularityError as exc:
        report.fatal.append(str(exc))
        for fam in FAMILIES:
            report.worst[fam] = WorstCase(np.inf, np.nan)
        return report

    stride = substeps // oversample if substeps % oversample == 0 else 1
    picks = np.arange(0, substeps + 1, stride)
    # states ordered by time: sample s of interval k happens at t_k + s*dt
    flat = stages[picks].reshape(-1, STATE_DIM)
    t0 = traj.times[:-1]
    times = np.concatenate([t0 + (s * dt) for s in picks])
    order = np.argsort(times, kind="stable")
    flat = flat[order]
    times = times[order]

    fam_rows = _family_rows(kern, models, flat)
    for j, fam in enumerate(FAMILIES):
        i = int(np.argmax(fam_rows[:, j]))
        report.worst[fam] = WorstCase(float(fam_rows[i, j]), float(times[i]))
    report.sample_times = times
    report.sample_residuals = fam_rows
    return report


def run_audit(
    traj: Trajectory, models: ModelSet, gates: AuditGates | None = None
) -> tuple[AuditReport, AuditGates]:
    """Full audit: re-simulation deviations plus the oversampled
    constraint sweep, merged into one report."""
    gates = gates or AuditGates()
    resim = resimulate(traj, models, gates.substeps)
    sweep = audit_constraints(traj, models, gates.oversample)
    merged = AuditReport(
        max_defect=resim.max_defect,
        fluid_deviation=resim.fluid_deviation,
        worst=sweep.worst,
        fatal=resim.fatal + sweep.fatal,
        sample_times=sweep.sample_times,
        sample_residuals=sweep.sample_residuals,
    )
    return merged, gates
