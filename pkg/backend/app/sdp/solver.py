from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
import logging
import time
from typing import Any, Dict, List

import cvxpy as cp
import numpy as np

from app.config import Settings, get_settings
from app.core.performance_profiler import profiled
from app.sdp.problem import SYMMETRY_TOLERANCE, SdpProblem

LOGGER = logging.getLogger(__name__)

# The backend runs one decade tighter than the contract so returned points pass the eigenvalue check.
_BACKEND_TIGHTENING = 0.1
_FINEST_BACKEND_TOL = 1e-14


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical-failure"


@dataclass(frozen=True)
class SolverTolerances:
    feasibility: float = 1e-7
    gap: float = 1e-7
    strict_epsilon: float = 1e-9
    max_iters: int = 500
    solver: str = "CLARABEL"

    @classmethod
    def from_settings(cls, settings: Settings | None = None) -> "SolverTolerances":
        settings = settings or get_settings()
        return cls(
            feasibility=settings.sdp_feasibility_tol,
            gap=settings.sdp_gap_tol,
            strict_epsilon=settings.sdp_strict_epsilon,
            max_iters=settings.sdp_max_iters,
            solver=settings.sdp_solver.upper(),
        )


@dataclass
class SdpSolution:
    status: SolveStatus
    objective_value: float = float("nan")
    values: Dict[str, Any] = field(default_factory=dict)
    max_lmi_violation: float = float("nan")
    solve_seconds: float = 0.0
    backend_status: str = ""

    @property
    def is_optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


def max_eigenvalue(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return float("-inf")
    return float(np.linalg.eigvalsh((matrix + matrix.T) / 2.0)[-1])


def check_lmi_feasibility(matrix: np.ndarray, tol: float) -> bool:
    """True iff the largest eigenvalue of the symmetric `matrix` is at most `tol`."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"LMI matrix must be square, got shape {matrix.shape}")
    asymmetry = float(np.max(np.abs(matrix - matrix.T))) if matrix.size else 0.0
    if asymmetry > SYMMETRY_TOLERANCE:
        raise ValueError(f"LMI matrix is not symmetric (max asymmetry {asymmetry:.3e})")
    return max_eigenvalue(matrix) <= tol


def constraint_violation(problem: SdpProblem, values: Dict[str, Any]) -> float:
    """Largest violation over LMIs (lambda_max), linear rows and variable bounds; 0 when feasible."""
    worst = 0.0
    for lmi in problem.lmi_constraints:
        worst = max(worst, max_eigenvalue(lmi.evaluate(values)))
    for row in problem.linear_constraints:
        worst = max(worst, row.evaluate(values))
    for name, variable in problem.scalar_vars.items():
        value = float(values[name])
        worst = max(worst, variable.lower - value)
        if variable.upper is not None:
            worst = max(worst, value - variable.upper)
    return worst


def _violation_scale(problem: SdpProblem, values: Dict[str, Any]) -> float:
    scale = 1.0
    for lmi in problem.lmi_constraints:
        matrix = lmi.evaluate(values)
        if matrix.size:
            scale = max(scale, float(np.max(np.abs(matrix))))
    return scale


def _solver_options(tol: SolverTolerances, tightening: float = _BACKEND_TIGHTENING) -> Dict[str, Any]:
    feas = max(tol.feasibility * tightening, _FINEST_BACKEND_TOL)
    gap = max(tol.gap * tightening, _FINEST_BACKEND_TOL)
    if tol.solver == "CLARABEL":
        return {"tol_feas": feas, "tol_gap_abs": gap, "tol_gap_rel": gap, "max_iter": tol.max_iters}
    if tol.solver == "SCS":
        return {"eps_abs": feas, "eps_rel": gap, "max_iters": max(tol.max_iters, 20_000)}
    if tol.solver == "CVXOPT":
        return {"feastol": feas, "abstol": gap, "reltol": gap, "max_iters": tol.max_iters}
    return {}


def _resolve_solver(name: str) -> str:
    installed = cp.installed_solvers()
    if name in installed:
        return name
    for fallback in ("CLARABEL", "SCS", "CVXOPT", "MOSEK"):
        if fallback in installed:
            LOGGER.warning("Solver %s indisponivel; usando %s", name, fallback)
            return fallback
    raise RuntimeError(f"no semidefinite-capable cvxpy solver installed (asked for {name})")


def _build_cvxpy(problem: SdpProblem, tol: SolverTolerances):
    names = list(problem.scalar_vars)
    index = {name: position for position, name in enumerate(names)}
    scalars = cp.Variable(len(names)) if names else None
    eps = tol.strict_epsilon

    constraints: List[Any] = []
    matrices: Dict[str, Any] = {}
    diagonals: Dict[str, Any] = {}
    for name, variable in problem.matrix_vars.items():
        if variable.diagonal:
            entries = cp.Variable(variable.size, name=name)
            constraints.append(entries >= eps)
            diagonals[name] = entries
            matrices[name] = cp.diag(entries)
        else:
            matrix = cp.Variable((variable.size, variable.size), symmetric=True, name=name)
            constraints.append(matrix >> eps * np.eye(variable.size))
            matrices[name] = matrix

    if scalars is not None:
        lower = np.array([
            max(var.lower, eps) if var.strictly_positive else var.lower for var in problem.scalar_vars.values()
        ])
        constraints.append(scalars >= lower)
        upper_idx = [pos for pos, var in enumerate(problem.scalar_vars.values()) if var.upper is not None]
        if upper_idx:
            upper = np.array([problem.scalar_vars[names[pos]].upper for pos in upper_idx], dtype=float)
            constraints.append(scalars[upper_idx] <= upper)

    for lmi in problem.lmi_constraints:
        expression = cp.Constant(lmi.constant)
        for term in lmi.scalar_terms:
            expression = expression + scalars[index[term.variable]] * term.coefficient
        for term in lmi.congruence_terms:
            product = term.left.T @ matrices[term.variable] @ term.right
            expression = expression + product + product.T
        constraints.append((expression + expression.T) / 2 << 0)

    for row in problem.linear_constraints:
        if not row.coefficients:
            continue
        coef = np.zeros(len(names))
        for name, value in row.coefficients.items():
            coef[index[name]] += value
        constraints.append(coef @ scalars + row.constant <= 0)

    if problem.objective and scalars is not None:
        weights = np.zeros(len(names))
        for name, value in problem.objective.items():
            weights[index[name]] += value
        objective = cp.Minimize(weights @ scalars + problem.objective_constant)
    else:
        objective = cp.Minimize(problem.objective_constant)

    return cp.Problem(objective, constraints), names, scalars, matrices, diagonals


def _collect_values(problem: SdpProblem, names, scalars, matrices, diagonals) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    if scalars is not None:
        raw = np.asarray(scalars.value, dtype=float).reshape(-1)
        for position, name in enumerate(names):
            values[name] = float(raw[position])
    for name, variable in problem.matrix_vars.items():
        if variable.diagonal:
            values[name] = np.diag(np.asarray(diagonals[name].value, dtype=float).reshape(-1))
        else:
            matrix = np.asarray(matrices[name].value, dtype=float)
            values[name] = (matrix + matrix.T) / 2.0
    return values


def objective_value(problem: SdpProblem, values: Dict[str, Any]) -> float:
    return float(sum(coef * float(values[name]) for name, coef in problem.objective.items()) + problem.objective_constant)


def solve(
    problem: SdpProblem,
    tol: SolverTolerances | None = None,
    *,
    relax_binaries: bool = False,
) -> SdpSolution:
    """Solve `problem` with the configured cvxpy backend.

    Binary-marked scalars are only accepted when `relax_binaries` is set; they are then
    treated as continuous within their bounds. An `optimal` status is only reported when
    the returned point violates no constraint by more than `tol.feasibility` (absolute).
    The backend tolerances are relative to the problem data, so a point that misses the
    absolute bound is re-solved once with them tightened by the observed excess.
    """
    tol = tol or SolverTolerances.from_settings()
    problem.validate()
    binaries = problem.binary_variables()
    if binaries and not relax_binaries:
        raise ValueError(f"problem {problem.name!r} has binary variables {binaries[:5]}; solve a relaxation instead")

    cvx_problem, names, scalars, matrices, diagonals = _build_cvxpy(problem, tol)
    solver_name = _resolve_solver(tol.solver)
    backend_tol = SolverTolerances(tol.feasibility, tol.gap, tol.strict_epsilon, tol.max_iters, solver_name)

    tightening = _BACKEND_TIGHTENING
    elapsed = 0.0
    for attempt in range(2):
        started_at = time.perf_counter()
        try:
            with profiled("sdp:solve" if attempt == 0 else "sdp:resolve"):
                cvx_problem.solve(solver=solver_name, **_solver_options(backend_tol, tightening))
        except (cp.error.SolverError, ArithmeticError, ValueError) as exc:
            LOGGER.debug("Solver %s falhou em %s: %s", solver_name, problem.name, exc)
            return SdpSolution(
                status=SolveStatus.NUMERICAL_FAILURE,
                solve_seconds=elapsed + time.perf_counter() - started_at,
                backend_status=str(exc),
            )
        elapsed += time.perf_counter() - started_at
        backend_status = str(cvx_problem.status)

        if backend_status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return SdpSolution(status=SolveStatus.INFEASIBLE, solve_seconds=elapsed, backend_status=backend_status)
        if backend_status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
            return SdpSolution(status=SolveStatus.UNBOUNDED, solve_seconds=elapsed, backend_status=backend_status)
        if backend_status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or (scalars is not None and scalars.value is None):
            return SdpSolution(status=SolveStatus.NUMERICAL_FAILURE, solve_seconds=elapsed, backend_status=backend_status)

        values = _collect_values(problem, names, scalars, matrices, diagonals)
        violation = constraint_violation(problem, values)
        if violation <= tol.feasibility or attempt:
            break
        excess = max(_violation_scale(problem, values), violation / tol.feasibility)
        tightening = _BACKEND_TIGHTENING / excess
        LOGGER.debug(
            "Ponto de %s viola restricoes em %.3e; refazendo com tolerancia %.1e",
            problem.name,
            violation,
            tol.feasibility * tightening,
        )

    status = SolveStatus.OPTIMAL
    if violation > tol.feasibility:
        LOGGER.debug(
            "Ponto de %s viola restricoes em %.3e (status do solver: %s)",
            problem.name,
            violation,
            backend_status,
        )
        status = SolveStatus.NUMERICAL_FAILURE

    return SdpSolution(
        status=status,
        objective_value=objective_value(problem, values),
        values=values,
        max_lmi_violation=violation,
        solve_seconds=elapsed,
        backend_status=backend_status,
    )
