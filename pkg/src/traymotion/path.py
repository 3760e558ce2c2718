"""Parametric task-space path and its mapping onto the linear joints.

The path ``r_H(sigma)`` is defined on ``sigma in [0, 1]`` with analytic
derivatives up to third order.  The figure-eight benchmark curve lies in
the horizontal plane; arbitrary curves can be supplied as tabulated knots
with cubic interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dual import cos, sin, value_of

TWO_PI = 2.0 * np.pi
SIGMA_TOL = 1e-12


class PathDomainError(ValueError):
    """sigma requested outside [0, 1]."""


@dataclass
class PathSpec:
    """Path selection plus its shape parameters.

    kind ``"lemniscate"`` uses ``scale_m`` (half-diagonal scale ``a``); kind
    ``"tabulated-spline"`` interpolates knot rows ``(sigma_k, r_k)`` with
    cubic splines.  A cubic spline is C^2 with a piecewise-constant third
    derivative; the figure-eight curve is smooth everywhere.
    """

    kind: str = "lemniscate"
    scale_m: float = 0.3
    knots_sigma: np.ndarray | None = None
    knots_xyz: np.ndarray | None = None
    _spline_coeffs: list | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("lemniscate", "tabulated-spline"):
            raise ValueError(f"unknown path kind {self.kind!r}")
        if self.kind == "lemniscate":
            if not np.isfinite(self.scale_m) or self.scale_m <= 0.0:
                raise ValueError("lemniscate scale must be positive and finite")
        else:
            if self.knots_sigma is None or self.knots_xyz is None:
                raise ValueError("tabulated-spline path needs knot arrays")
            s = np.asarray(self.knots_sigma, dtype=float)
            r = np.asarray(self.knots_xyz, dtype=float)
            if s.ndim != 1 or r.shape != (s.size, 3) or s.size < 4:
                raise ValueError("knots must be (n,) sigma and (n, 3) xyz with n >= 4")
            if not (np.all(np.diff(s) > 0) and abs(s[0]) <= SIGMA_TOL and abs(s[-1] - 1.0) <= SIGMA_TOL):
                raise ValueError("knot sigmas must increase strictly from 0 to 1")
            self.knots_sigma = s
            self.knots_xyz = r
            from scipy.interpolate import CubicSpline

            self._spline_coeffs = [CubicSpline(s, r[:, i]) for i in range(3)]

    @classmethod
    def from_csv(cls, csv_path: str) -> "PathSpec":
        """Load a tabulated path from CSV rows of ``sigma, x, y, z``."""
        data = np.loadtxt(csv_path, delimiter=",", comments="#")
        if data.ndim != 2 or data.shape[1] != 4:
            raise ValueError(f"{csv_path}: expected rows of sigma,x,y,z")
        return cls(kind="tabulated-spline", knots_sigma=data[:, 0], knots_xyz=data[:, 1:4])


@dataclass
class PathPoint:
    """Path position and sigma-derivatives up to third order."""

    r: np.ndarray
    dr: np.ndarray
    ddr: np.ndarray
    dddr: np.ndarray


def _check_sigma(sigma) -> None:
    sv = np.asarray(value_of(sigma))
    if np.any(sv < -SIGMA_TOL) or np.any(sv > 1.0 + SIGMA_TOL):
        raise PathDomainError(f"sigma outside [0, 1]: {sv!r}")


def _lemniscate_components(a: float, sigma):
    """Figure-eight curve and its first three sigma-derivatives.

    Both coordinates are quotients N/D of trig polynomials in tau = 2*pi*
    sigma, so the derivatives follow the exact cascade f' = (N' - f D')/D,
    f'' = (N'' - 2 f' D' - f D'')/D, f''' = (N''' - 3 f'' D' - 3 f' D''
    - f D''')/D, then rescale by powers of 2*pi for d/dsigma.
    """
    tau = TWO_PI * sigma
    s = sin(tau)
    c = cos(tau)
    k = a * np.sqrt(2.0)

    D = s * s + 1.0
    D1 = 2.0 * s * c
    D2 = 2.0 * (c * c - s * s)
    D3 = -8.0 * s * c

    def cascade(N, N1, N2, N3):
        f = N / D
        f1 = (N1 - f * D1) / D
        f2 = (N2 - 2.0 * f1 * D1 - f * D2) / D
        f3 = (N3 - 3.0 * f2 * D1 - 3.0 * f1 * D2 - f * D3) / D
        return f, f1, f2, f3

    # x: N = k c;  y: N = k s c
    x = cascade(k * c, -k * s, -k * c, k * s)
    sc = s * c
    cc_ss = c * c - s * s
    y = cascade(k * sc, k * cc_ss, -4.0 * k * sc, -4.0 * k * cc_ss)

    scale = (1.0, TWO_PI, TWO_PI**2, TWO_PI**3)
    zero = 0.0 * sigma
    return tuple((x[i] * scale[i], y[i] * scale[i], zero) for i in range(4))


def _spline_components(spec: PathSpec, sigma):
    """Piecewise-cubic evaluation, generic over the scalar type of sigma."""
    sv = np.asarray(value_of(sigma), dtype=float)
    out = []
    for cs in spec._spline_coeffs:
        breaks = cs.x
        idx = np.clip(np.searchsorted(breaks, sv, side="right") - 1, 0, breaks.size - 2)
        c3, c2, c1, c0 = (cs.c[j][idx] for j in range(4))
        if sv.ndim == 0:
            c3, c2, c1, c0 = float(c3), float(c2), float(c1), float(c0)
            t = sigma - float(breaks[idx])
        else:
            t = sigma - breaks[idx]
        r = ((c3 * t + c2) * t + c1) * t + c0
        d1 = (3.0 * c3 * t + 2.0 * c2) * t + c1
        d2 = 6.0 * c3 * t + 2.0 * c2
        d3 = 6.0 * c3 + 0.0 * t
        out.append((r, d1, d2, d3))
    return tuple(tuple(out[axis][order] for axis in range(3)) for order in range(4))


def path_components(spec: PathSpec, sigma):
    """Generic-scalar kernel: (r, r', r'', r''') as tuples of components.

    No domain check here: integrator stages may probe marginally outside
    [0, 1]; the figure-eight formula is periodic and the spline pieces
    extrapolate their end cubics.  Public entry points check the domain.
    """
    if spec.kind == "lemniscate":
        return _lemniscate_components(spec.scale_m, sigma)
    return _spline_components(spec, sigma)


def eval_path(spec: PathSpec, sigma: float) -> PathPoint:
    """Path point with analytic sigma-derivatives at a single sigma."""
    _check_sigma(sigma)
    r, d1, d2, d3 = path_components(spec, float(sigma))
    arr = lambda v: np.array([float(v[0]), float(v[1]), float(v[2])])
    return PathPoint(arr(r), arr(d1), arr(d2), arr(d3))


def joint_chain_components(spec: PathSpec, sigma, sigma_d, sigma_dd, sigma_ddd):
    """Linear-joint chain (q_L, dq_L, ddq_L, dddq_L) in (z, x, y) ordering.

    Chain rule through sigma(t): dq = r' sd, ddq = r'' sd^2 + r' sdd,
    dddq = r''' sd^3 + 3 r'' sd sdd + r' sddd.
    """
    r, r1, r2, r3 = path_components(spec, sigma)

    def reorder(v):
        return (v[2], v[0], v[1])

    q = reorder(r)
    sd2 = sigma_d * sigma_d
    qd = tuple(r1[i] * sigma_d for i in range(3))
    qdd = tuple(r2[i] * sd2 + r1[i] * sigma_dd for i in range(3))
    qddd = tuple(
        r3[i] * (sd2 * sigma_d) + 3.0 * r2[i] * (sigma_d * sigma_dd) + r1[i] * sigma_ddd
        for i in range(3)
    )
    return q, reorder(qd), reorder(qdd), reorder(qddd)


def path_to_joint(spec: PathSpec, sigma: float, sigma_d: float, sigma_dd: float, sigma_ddd: float):
    """Linear-joint position/velocity/acceleration/jerk as numpy vectors,
    ordered (q_z, q_x, q_y)."""
    _check_sigma(sigma)
    chains = joint_chain_components(spec, float(sigma), float(sigma_d), float(sigma_dd), float(sigma_ddd))
    return tuple(np.array([float(c[0]), float(c[1]), float(c[2])]) for c in chains)


def axis_path_lengths(spec: PathSpec, samples: int = 2001) -> np.ndarray:
    """Per-axis travel integral of |dr_i/dsigma|, used by time heuristics."""
    sg = np.linspace(0.0, 1.0, samples)
    _, d1, _, _ = path_components(spec, sg)
    speeds = np.abs(np.stack([np.asarray(d, dtype=float) * np.ones_like(sg) for d in d1]))
    return np.trapezoid(speeds, sg, axis=1)
