"""Configuration ingestion: YAML file -> validated model objects.

Every key carries its unit in its name; unknown keys are rejected rather
than ignored, and every omitted field falls back to a documented default.
The fully resolved dictionary is preserved so reports can record the exact
configuration a run used.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
import yaml

from .audit import AuditGates
from .contact import CupParams
from .kinematics import AxisBounds, JointLimits, RobotModel
from .ocp import BoundaryConditions, ModelSet, OcpConfig
from .path import PathSpec
from .pendulum import PendulumParams
from .solver import SolverOptions

PI = float(np.pi)


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


DEFAULTS: dict = {
    "robot": {
        "wrist_to_tray_offset_m": [0.07, 0.0, 0.055],
        "rotary_axis_b_unit": [0.0, 1.0, 0.0],
        "rotary_axis_c_unit": [1.0, 0.0, 0.0],
        "rotary_axis_a_unit": [0.0, 0.0, 1.0],
        "gravity_mps2": [0.0, 0.0, -9.81],
        "limits": {
            "linear_position_m": [-1.0, 1.0],
            "linear_velocity_mps": [-2.0, 2.0],
            "linear_acceleration_mps2": [-10.0, 10.0],
            "linear_jerk_mps3": [-100.0, 100.0],
            "rotary_position_rad": [-PI, PI],
            "rotary_velocity_radps": [-5.0, 5.0],
            "rotary_acceleration_radps2": [-50.0, 50.0],
            "rotary_jerk_radps3": [-500.0, 500.0],
        },
    },
    "cup": {
        "mass_kg": 0.3,
        "com_offset_m": [0.0, 0.0, 0.05],
        "inertia_com_kgm2": None,  # default: solid cylinder, footprint radius, 0.1 m tall
        "friction_coefficient": 0.35,
        "footprint_radius_m": 0.05,
        "added_fluid_point_mass_kg": 0.0,
    },
    "fluid": {
        "pendulum_length_m": 0.027,
        "lumped_mass_kg": 0.55,
        "damping_kg_per_s": 0.2,
        "angle_limit_rad": PI / 18.0,
        "rate_limit_radps": 5.0 * PI / 9.0,
        "fill_height_m": 0.06,
        "pivot_offset_m": None,  # default: [0, 0, length + fill_height/2]
    },
    "path": {
        "kind": "lemniscate",
        "scale_m": 0.3,
        "csv_file": None,
    },
    "ocp": {
        "shooting_intervals": 100,
        "time_weight": 1.0,
        "input_weight": 1.0e-4,
        "t_total_bounds_s": [0.05, 60.0],
        "sigma_rate_max": 5.0,
        "sigma_accel_max": 50.0,
        "sigma_jerk_max": 100.0,
        "midpoint_constraints": False,
        "enforce_fluid_bounds": True,
        "guess_time_factor": 1.5,
        "boundary": {
            "start_sigma": True,
            "start_sigma_rates": True,
            "start_rotary_position": True,
            "start_rotary_rates": True,
            "start_fluid_rest": True,
            "end_sigma": True,
            "end_sigma_rates": True,
            "end_rotary_rates": True,
            "end_fluid_rest": True,
        },
    },
    "solver": {
        "max_outer_iterations": 40,
        "max_inner_iterations": 800,
        "kkt_tolerance": 1.0e-6,
        "feasibility_tolerance": 1.0e-6,
        "penalty_initial": 10.0,
        "penalty_growth": 10.0,
        "penalty_max": 1.0e10,
        "inner_tolerance_initial": 1.0e-2,
        "feasibility_decrease": 0.25,
        "lbfgs_memory": 30,
        "verbosity": 0,
        "log_file": None,
    },
    "audit": {
        "substeps": 20,
        "oversample": 10,
        "max_fluid_deviation_rad": 1.0e-3,
        "max_violation": 1.0e-3,
    },
    "output": {
        "directory": "out",
    },
}


def _merge(defaults, user, path: str):
    """Defaults overlaid with user values; unknown or mistyped keys fail."""
    if user is None:
        return copy.deepcopy(defaults)
    if not isinstance(user, dict):
        raise ConfigError(f"{path or 'top level'}: expected a mapping, got {type(user).__name__}")
    out = {}
    for key, dval in defaults.items():
        here = f"{path}.{key}" if path else key
        if key in user and isinstance(dval, dict):
            out[key] = _merge(dval, user[key], here)
        elif key in user:
            out[key] = copy.deepcopy(user[key])
        else:
            out[key] = copy.deepcopy(dval)
    for key in user:
        if key not in defaults:
            here = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown config key: {here}")
    return out


def resolve_config(user: dict | None) -> dict:
    return _merge(DEFAULTS, user, "")


def load_config_file(path: str) -> dict:
    """Parse and resolve a YAML config file; parse errors carry the line."""
    try:
        with open(path, "r") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: YAML parse error{where}: {exc.problem}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML parse error: {exc}") from exc
    if raw is None:
        raw = {}
    return resolve_config(raw)


def apply_override(resolved: dict, assignment: str) -> None:
    """Apply one ``dotted.key=value`` override in place; the key must be a
    recognized leaf and the value is parsed as a YAML scalar."""
    if "=" not in assignment:
        raise ConfigError(f"override needs the form key=value, got {assignment!r}")
    key, _, raw_value = assignment.partition("=")
    key = key.strip()
    try:
        value = yaml.safe_load(raw_value)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {key}: cannot parse value {raw_value!r}: {exc}") from exc
    node = resolved
    ref = DEFAULTS
    parts = key.split(".")
    for i, part in enumerate(parts):
        if not isinstance(ref, dict) or part not in ref:
            raise ConfigError(f"unknown config key: {'.'.join(parts[: i + 1])}")
        ref = ref[part]
        if i < len(parts) - 1:
            node = node[part]
    if isinstance(ref, dict):
        raise ConfigError(f"config key {key} is a section, not a value")
    node[parts[-1]] = value


@dataclass
class RunConfig:
    """Typed view of a resolved configuration."""

    models: ModelSet
    ocp: OcpConfig
    solver: SolverOptions
    audit: AuditGates
    output_dir: str
    resolved: dict


def _pair(section: dict, key: str, where: str) -> tuple[float, float]:
    v = section[key]
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise ConfigError(f"{where}.{key}: expected [lower, upper]")
    return float(v[0]), float(v[1])


def _bounds_pairs(limits: dict, lin_key: str, rot_key: str) -> AxisBounds:
    lin = _pair(limits, lin_key, "robot.limits")
    rot = _pair(limits, rot_key, "robot.limits")
    return AxisBounds(
        lower=[lin[0]] * 3 + [rot[0]] * 3,
        upper=[lin[1]] * 3 + [rot[1]] * 3,
    )


def _two_vector(value, where: str) -> np.ndarray:
    if isinstance(value, (int, float)):
        return np.array([float(value), float(value)])
    arr = np.asarray(value, dtype=float)
    if arr.shape != (2,):
        raise ConfigError(f"{where}: expected a scalar or two entries")
    return arr


def build_run_config(resolved: dict) -> RunConfig:
    """Construct the typed objects, translating validation failures into
    config errors that name the offending section."""

    def section(name, builder):
        try:
            return builder(resolved[name])
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"section {name}: {exc}") from exc

    def robot(sec):
        limits = sec["limits"]
        return RobotModel(
            r_AE=np.asarray(sec["wrist_to_tray_offset_m"], dtype=float),
            rotary_axes=np.array(
                [sec["rotary_axis_b_unit"], sec["rotary_axis_c_unit"], sec["rotary_axis_a_unit"]],
                dtype=float,
            ),
            joint_limits=JointLimits(
                position=_bounds_pairs(limits, "linear_position_m", "rotary_position_rad"),
                velocity=_bounds_pairs(limits, "linear_velocity_mps", "rotary_velocity_radps"),
                acceleration=_bounds_pairs(
                    limits, "linear_acceleration_mps2", "rotary_acceleration_radps2"
                ),
                jerk=_bounds_pairs(limits, "linear_jerk_mps3", "rotary_jerk_radps3"),
            ),
            gravity=np.asarray(sec["gravity_mps2"], dtype=float),
        )

    def cup(sec):
        inertia = sec["inertia_com_kgm2"]
        return CupParams(
            mass_kg=float(sec["mass_kg"]),
            com_offset_m=np.asarray(sec["com_offset_m"], dtype=float),
            inertia_com_kgm2=None if inertia is None else np.asarray(inertia, dtype=float),
            friction_coefficient=float(sec["friction_coefficient"]),
            footprint_radius_m=float(sec["footprint_radius_m"]),
            added_point_mass_kg=float(sec["added_fluid_point_mass_kg"]),
        )

    def fluid(sec):
        pivot = sec["pivot_offset_m"]
        return PendulumParams(
            length_m=float(sec["pendulum_length_m"]),
            mass_kg=float(sec["lumped_mass_kg"]),
            damping_kg_per_s=float(sec["damping_kg_per_s"]),
            angle_limit_rad=_two_vector(sec["angle_limit_rad"], "fluid.angle_limit_rad"),
            rate_limit_radps=_two_vector(sec["rate_limit_radps"], "fluid.rate_limit_radps"),
            pivot_offset_m=None if pivot is None else np.asarray(pivot, dtype=float),
            fill_height_m=float(sec["fill_height_m"]),
        )

    def path(sec):
        if sec["kind"] == "lemniscate":
            return PathSpec(kind="lemniscate", scale_m=float(sec["scale_m"]))
        if sec["kind"] == "tabulated-spline":
            if not sec["csv_file"]:
                raise ConfigError("path.csv_file is required for a tabulated-spline path")
            return PathSpec.from_csv(sec["csv_file"])
        raise ConfigError(f"path.kind must be lemniscate or tabulated-spline, got {sec['kind']!r}")

    def ocp(sec):
        sec = dict(sec)
        boundary = BoundaryConditions(**sec.pop("boundary"))
        bounds = sec.pop("t_total_bounds_s")
        return OcpConfig(
            n_intervals=int(sec.pop("shooting_intervals")),
            t_total_bounds_s=(float(bounds[0]), float(bounds[1])),
            boundary=boundary,
            **sec,
        )

    def solver(sec):
        return SolverOptions(**sec)

    def audit(sec):
        return AuditGates(**sec)

    models = ModelSet(
        robot=section("robot", robot),
        path=section("path", path),
        cup=section("cup", cup),
        fluid=section("fluid", fluid),
    )
    return RunConfig(
        models=models,
        ocp=section("ocp", ocp),
        solver=section("solver", solver),
        audit=section("audit", audit),
        output_dir=str(resolved["output"]["directory"]),
        resolved=resolved,
    )


def load_run_config(path: str, overrides: list[str] = (), out_dir: str | None = None) -> RunConfig:
    """File + overrides -> RunConfig, the one-call entry the CLI uses."""
    resolved = load_config_file(path)
    for assignment in overrides:
        apply_override(resolved, assignment)
    if out_dir is not None:
        resolved["output"]["directory"] = out_dir
    return build_run_config(resolved)
