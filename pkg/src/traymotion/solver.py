"""Self-contained solver for sparse constrained NLPs.

Augmented-Lagrangian outer loop (PHR form: shifted quadratic penalties with
multiplier updates) around a bound-constrained limited-memory quasi-Newton
inner solve.  Inequality constraints use the convention ``c(z) <= 0``;
variable bounds are handled natively by the inner solver, including pinned
variables with equal lower and upper bounds.

The problem contract is solver-agnostic: anything exposing ``n``,
``lower``, ``upper``, and ``evaluate(z, want_jacobians)`` returning a
:class:`PointEval` can be solved, so an external interior-point solver
could be attached behind the same interface.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy.optimize import minimize


@dataclass
class PointEval:
    """Objective, constraints, and transposed-Jacobian products at a point.

    ``jt_product(w_eq, w_ineq)`` returns ``J_eq^T w_eq + J_ineq^T w_ineq``
    without ever materializing a dense Jacobian; it is only available when
    the evaluation was requested with Jacobians.
    """

    f: float
    grad: np.ndarray | None
    c_eq: np.ndarray
    c_ineq: np.ndarray
    jt_product: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None


class DenseProblem:
    """Convenience wrapper for small problems with dense callbacks.

    ``objective`` maps z to ``(f, grad)``; ``eq`` and ``ineq`` map z to
    ``(c, J)`` with dense Jacobians.  Intended for tests and toy problems;
    the shooting NLP implements the evaluation contract directly.
    """

    def __init__(self, n, objective, lower=None, upper=None, eq=None, ineq=None):
        self.n = n
        self.objective = objective
        self.lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
        self.upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
        self._eq = eq
        self._ineq = ineq

    def evaluate(self, z, want_jacobians=True):
        f, grad = self.objective(z)
        c_eq, J_eq = (self._eq(z) if self._eq else (np.zeros(0), np.zeros((0, self.n))))
        c_in, J_in = (self._ineq(z) if self._ineq else (np.zeros(0), np.zeros((0, self.n))))

        def jt(w_eq, w_in):
            out = np.zeros(self.n)
            if w_eq.size:
                out += np.asarray(J_eq).T @ w_eq
            if w_in.size:
                out += np.asarray(J_in).T @ w_in
            return out

        return PointEval(float(f), np.asarray(grad, dtype=float), np.asarray(c_eq, dtype=float),
                         np.asarray(c_in, dtype=float), jt if want_jacobians else None)


@dataclass
class SolverOptions:
    max_outer_iterations: int = 40
    max_inner_iterations: int = 800
    kkt_tolerance: float = 1e-6
    feasibility_tolerance: float = 1e-6
    penalty_initial: float = 10.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e10
    inner_tolerance_initial: float = 1e-2
    feasibility_decrease: float = 0.25
    lbfgs_memory: int = 30
    verbosity: int = 0
    log_file: str | None = None

    def __post_init__(self):
        if self.max_outer_iterations < 1 or self.max_inner_iterations < 1:
            raise ValueError("iteration limits must be at least 1")
        for name in ("kkt_tolerance", "feasibility_tolerance", "penalty_initial",
                     "inner_tolerance_initial"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.penalty_growth <= 1.0:
            raise ValueError("penalty growth must exceed 1")


class SolveStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class OuterRecord:
    index: int
    objective: float
    merit_start: float
    merit_end: float
    violation: float
    kkt_residual: float
    penalty: float
    inner_iterations: int


@dataclass
class NlpSolution:
    z: np.ndarray
    objective: float
    kkt_residual: float
    constraint_violation: float
    iterations: int
    inner_iterations: int
    status: SolveStatus
    multipliers_eq: np.ndarray
    multipliers_ineq: np.ndarray
    history: list[OuterRecord] = field(default_factory=list)
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.CONVERGED


@dataclass
class KktReport:
    stationarity: float
    eq_violation: float
    ineq_violation: float
    complementarity: float
    bound_multipliers: np.ndarray
    satisfied: bool

    def to_dict(self) -> dict:
        return {
            "stationarity": self.stationarity,
            "eq_violation": self.eq_violation,
            "ineq_violation": self.ineq_violation,
            "complementarity": self.complementarity,
            "satisfied": self.satisfied,
        }


def _bound_scales(problem, init: np.ndarray) -> np.ndarray:
    """Variable scales from bound ranges, falling back to 1 where a bound
    is missing; problems may override via a ``variable_scales`` method."""
    custom = getattr(problem, "variable_scales", None)
    if custom is not None:
        s = np.asarray(custom(init), dtype=float)
    else:
        lo, up = problem.lower, problem.upper
        s = np.ones(problem.n)
        finite = np.isfinite(lo) & np.isfinite(up) & (up > lo)
        s[finite] = 0.5 * (up[finite] - lo[finite])
    return np.clip(s, 1e-8, 1e8)


def _row_scales(problem, init: np.ndarray, m_eq: int, m_in: int):
    """Constraint-row scales (natural residual = scaled residual times the
    scale).  Problems expose ``constraint_scales(init)`` to harmonize rows
    of different physical magnitude; defaults are unscaled."""
    custom = getattr(problem, "constraint_scales", None)
    if custom is None:
        return np.ones(m_eq), np.ones(m_in)
    s_eq, s_in = custom(init)
    s_eq = np.clip(np.asarray(s_eq, dtype=float), 1e-8, 1e8)
    s_in = np.clip(np.asarray(s_in, dtype=float), 1e-8, 1e8)
    if s_eq.shape != (m_eq,) or s_in.shape != (m_in,):
        raise ValueError("constraint_scales returned wrong shapes")
    return s_eq, s_in


def _projected_residual(z, grad, lower, upper) -> float:
    """Infinity norm of z - P(z - grad), the bound-aware stationarity."""
    return float(np.max(np.abs(z - np.clip(z - grad, lower, upper))) if z.size else 0.0)


def check_kkt(problem, z, multipliers_eq, multipliers_ineq, tol: float) -> KktReport:
    """First-order optimality report at a point with given multipliers."""
    z = np.asarray(z, dtype=float)
    ev = problem.evaluate(z, True)
    lam = np.asarray(multipliers_eq, dtype=float)
    mu = np.asarray(multipliers_ineq, dtype=float)
    grad_L = ev.grad + ev.jt_product(lam, mu)
    stationarity = _projected_residual(z, grad_L, problem.lower, problem.upper)
    eq_violation = float(np.max(np.abs(ev.c_eq))) if ev.c_eq.size else 0.0
    ineq_violation = float(np.max(np.maximum(0.0, ev.c_ineq))) if ev.c_ineq.size else 0.0
    complementarity = float(np.max(np.abs(mu * ev.c_ineq))) if ev.c_ineq.size else 0.0
    on_lower = np.isfinite(problem.lower) & (z - problem.lower <= 1e-9 * (1.0 + np.abs(z)))
    on_upper = np.isfinite(problem.upper) & (problem.upper - z <= 1e-9 * (1.0 + np.abs(z)))
    bound_mult = np.where(on_lower | on_upper, grad_L, 0.0)
    ok = stationarity <= tol and eq_violation <= tol and ineq_violation <= tol and complementarity <= tol
    return KktReport(stationarity, eq_violation, ineq_violation, complementarity, bound_mult, ok)


def solve(problem, init: np.ndarray, opts: SolverOptions | None = None) -> NlpSolution:
    """Minimize the problem objective subject to its constraints and bounds.

    Deterministic: identical problems, initial points, and options yield
    identical iterate sequences.  Never raises for solver-side failures;
    the status field reports the outcome.
    """
    opts = opts or SolverOptions()
    log = _Logger(opts)
    z = np.clip(np.asarray(init, dtype=float).copy(), problem.lower, problem.upper)
    if z.size != problem.n:
        raise ValueError(f"initial point has size {z.size}, expected {problem.n}")

    scales = _bound_scales(problem, z)
    lower_s = problem.lower / scales
    upper_s = problem.upper / scales

    probe = problem.evaluate(z, False)
    m_eq, m_in = probe.c_eq.size, probe.c_ineq.size
    s_eq, s_in = _row_scales(problem, z, m_eq, m_in)
    lam = np.zeros(m_eq)  # multipliers of the row-scaled constraints
    mu = np.zeros(m_in)
    rho = opts.penalty_initial
    omega = opts.inner_tolerance_initial
    omega_min = 0.25 * opts.kkt_tolerance * min(1.0, float(scales.min()))

    history: list[OuterRecord] = []
    total_inner = 0
    violation_prev = np.inf
    stall = 0
    status = SolveStatus.MAX_ITER
    message = "outer iteration budget exhausted"
    kkt_res = np.inf
    violation = np.inf
    ev = None

    def al_value_grad(zs, merit_scale):
        """Merit and gradient of the augmented Lagrangian in scaled
        variables and row-scaled constraints; non-finite excursions
        (explosive shooting intervals) come back as a large finite value so
        the line search backtracks."""
        ev_ = problem.evaluate(zs * scales, True)
        ce = ev_.c_eq / s_eq
        ci = ev_.c_ineq / s_in
        active = np.maximum(0.0, mu + rho * ci)
        val = (
            ev_.f
            + lam @ ce
            + 0.5 * rho * float(ce @ ce)
            + (float(active @ active) - float(mu @ mu)) / (2.0 * rho)
        )
        grad = ev_.grad + ev_.jt_product((lam + rho * ce) / s_eq, active / s_in)
        if not (np.isfinite(val) and np.all(np.isfinite(grad))):
            return 1e20 * merit_scale, np.zeros_like(zs)
        return val * merit_scale, grad * scales * merit_scale

    for outer in range(opts.max_outer_iterations):
        zs = z / scales
        merit_start, g_start = al_value_grad(zs, 1.0)
        if not np.isfinite(merit_start):
            status, message = SolveStatus.NUMERICAL_FAILURE, "non-finite merit at outer start"
            break
        # scale the merit so the inner solver starts from an O(1) gradient;
        # its unit initial Hessian would otherwise step astronomically far
        merit_scale = 1.0 / max(1.0, float(np.max(np.abs(g_start))) if g_start.size else 1.0)
        res = minimize(
            al_value_grad,
            zs,
            jac=True,
            args=(merit_scale,),
            method="L-BFGS-B",
            bounds=list(zip(lower_s, upper_s)),
            options={
                "maxiter": opts.max_inner_iterations,
                "maxfun": 6 * opts.max_inner_iterations,
                "maxcor": opts.lbfgs_memory,
                "maxls": 60,
                "ftol": 1e-18,
                "gtol": omega * merit_scale,
            },
        )
        z = np.clip(res.x * scales, problem.lower, problem.upper)
        total_inner += int(res.nit)

        ev = problem.evaluate(z, True)
        if not (np.isfinite(ev.f) and np.all(np.isfinite(ev.c_eq)) and np.all(np.isfinite(ev.c_ineq))):
            status, message = SolveStatus.NUMERICAL_FAILURE, "non-finite constraint data"
            break
        lam = lam + rho * (ev.c_eq / s_eq)
        mu = np.maximum(0.0, mu + rho * (ev.c_ineq / s_in))
        violation = max(
            float(np.max(np.abs(ev.c_eq))) if m_eq else 0.0,
            float(np.max(np.maximum(0.0, ev.c_ineq))) if m_in else 0.0,
        )
        grad_L = ev.grad + ev.jt_product(lam / s_eq, mu / s_in)
        kkt_res = _projected_residual(z, grad_L, problem.lower, problem.upper)
        merit_end = float(res.fun) / merit_scale

        history.append(
            OuterRecord(outer, ev.f, float(merit_start), merit_end, violation, kkt_res, rho, int(res.nit))
        )
        log.outer(history[-1])

        if violation <= opts.feasibility_tolerance and kkt_res <= opts.kkt_tolerance:
            status, message = SolveStatus.CONVERGED, "KKT and feasibility tolerances met"
            break

        if violation <= max(opts.feasibility_decrease * violation_prev, opts.feasibility_tolerance):
            omega = max(0.2 * omega, omega_min)
            stall = 0
        else:
            if rho >= opts.penalty_max:
                stall += 1
                if stall >= 3:
                    status = SolveStatus.INFEASIBLE
                    message = "penalty at maximum with stalled feasibility"
                    break
            rho = min(rho * opts.penalty_growth, opts.penalty_max)
            omega = max(0.5 * omega, omega_min)
        violation_prev = violation

    objective = float(ev.f) if ev is not None else float(probe.f)
    solution = NlpSolution(
        z=z,
        objective=objective,
        kkt_residual=float(kkt_res),
        constraint_violation=float(violation),
        iterations=len(history),
        inner_iterations=total_inner,
        status=status,
        multipliers_eq=lam / s_eq,  # multipliers of the natural-units constraints
        multipliers_ineq=mu / s_in,
        history=history,
        message=message,
    )
    log.summary(solution)
    return solution


class _Logger:
    """Line-oriented iteration log to stdout and/or a file."""

    def __init__(self, opts: SolverOptions):
        self.opts = opts
        self._fh = open(opts.log_file, "w") if opts.log_file else None

    def _emit(self, line: str) -> None:
        if self.opts.verbosity > 0:
            print(line, file=sys.stdout)
        if self._fh is not None:
            self._fh.write(line + "\n")
            self._fh.flush()

    def outer(self, rec: OuterRecord) -> None:
        self._emit(
            f"outer {rec.index:3d}  obj {rec.objective: .6e}  viol {rec.violation:.3e}  "
            f"kkt {rec.kkt_residual:.3e}  rho {rec.penalty:.1e}  inner {rec.inner_iterations}"
        )

    def summary(self, sol: NlpSolution) -> None:
        self._emit(
            f"status {sol.status.value}: obj {sol.objective:.6e}, "
            f"kkt {sol.kkt_residual:.3e}, viol {sol.constraint_violation:.3e}, "
            f"{sol.iterations} outer / {sol.inner_iterations} inner iterations"
        )
        if self._fh is not None:
            self._fh.close()
            self._fh = None
