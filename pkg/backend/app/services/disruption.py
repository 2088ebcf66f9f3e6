from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
import logging
import math
from typing import Dict, List, Tuple

import numpy as np

from app.config import get_settings
from app.core.errors import EnumerationCapExceeded, ScalabilityNotCertified, SolverFailure
from app.core.parallel import run_parallel
from app.network.types import AttackScenario, MonitorSet, NetworkModel, ThreatModel
from app.sdp.oracle import dissipation_matrix
from app.sdp.problem import CongruenceTerm, LmiConstraint, ScalarTerm, SdpProblem, selector
from app.sdp.solver import SolverTolerances, SolveStatus, max_eigenvalue, solve

LOGGER = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-9


class CertificateMode(str, Enum):
    FULL = "full"
    DIAGONAL = "diagonal"


@dataclass
class DisruptionResult:
    value: float
    gammas: Dict[int, float]
    psis: Dict[int, float]
    certificate: np.ndarray
    mode: CertificateMode
    solver_status: SolveStatus
    monitors: MonitorSet
    attack: AttackScenario
    solve_seconds: float = 0.0


@dataclass
class TypeWorstCase:
    alpha: int
    value: float
    argmax_attack: AttackScenario
    per_attack_values: Dict[Tuple[int, ...], float] = field(default_factory=dict)
    per_attack_gammas: Dict[Tuple[int, ...], Dict[int, float]] = field(default_factory=dict)


@dataclass
class DefenseCost:
    monitors: MonitorSet
    sensor_cost: float
    per_type_q: Dict[int, float]
    per_type_u: Dict[int, float]
    worst_cases: Dict[int, TypeWorstCase]
    expected_cost: float


def _gamma_name(node: int) -> str:
    return f"gamma_{node}"


def _psi_name(node: int) -> str:
    return f"psi_{node}"


def dissipation_factors(model: NetworkModel, attack: AttackScenario) -> Tuple[np.ndarray, np.ndarray]:
    """Congruence factors (left, right) with left.T P right + right.T P left = [[-L^T P - P L, P B], [B^T P, 0]]."""
    n = model.n
    alpha = attack.alpha
    left = np.hstack([np.eye(n), np.zeros((n, alpha))])
    right = np.hstack([-model.laplacian, attack.input_matrix(n)])
    return left, right


def build_disruption_problem(
    model: NetworkModel,
    monitors: MonitorSet,
    attack: AttackScenario,
    mode: CertificateMode = CertificateMode.FULL,
) -> SdpProblem:
    """Dual SDP of the worst-case disruption: min sum gamma_m delta_m + sum E_j psi_j s.t. dissipation LMI."""
    n = model.n
    monitors.check_against(n)
    attack.check_against(n)
    size = n + attack.alpha
    mode = CertificateMode(mode)

    problem = SdpProblem(name=f"disruption[M={list(monitors.nodes)},A={list(attack.nodes)},{mode.value}]")
    constant = np.zeros((size, size))
    constant[:n, :n] = np.diag(model.weights**2)
    lmi = LmiConstraint("dissipation", constant)

    for node in monitors.nodes:
        name = _gamma_name(node)
        problem.add_scalar(name, strictly_positive=True)
        problem.add_objective(name, model.thresholds[node])
        lmi.scalar_terms.append(ScalarTerm(name, -selector(size, node)))

    for column, (node, energy) in enumerate(zip(attack.nodes, attack.channel_energy)):
        name = _psi_name(node)
        problem.add_scalar(name, strictly_positive=True)
        problem.add_objective(name, energy)
        lmi.scalar_terms.append(ScalarTerm(name, -selector(size, n + column)))

    problem.add_matrix("P", n, diagonal=mode is CertificateMode.DIAGONAL)
    left, right = dissipation_factors(model, attack)
    lmi.congruence_terms.append(CongruenceTerm("P", left, right))
    problem.add_lmi(lmi)
    return problem


def assemble_dissipation_lmi(
    model: NetworkModel,
    monitors: MonitorSet,
    attack: AttackScenario,
    gammas: Dict[int, float],
    psis: Dict[int, float],
    certificate: np.ndarray,
) -> np.ndarray:
    penalty = np.zeros(model.n)
    for node in monitors.nodes:
        penalty[node] = gammas[node]
    psi = np.array([psis[node] for node in attack.nodes], dtype=float)
    return dissipation_matrix(
        model.laplacian,
        model.weights**2,
        penalty,
        attack.input_matrix(model.n),
        psi,
        np.asarray(certificate, dtype=float),
    )


def certificate_max_eigenvalue(model: NetworkModel, result: DisruptionResult) -> float:
    matrix = assemble_dissipation_lmi(
        model, result.monitors, result.attack, result.gammas, result.psis, result.certificate
    )
    return max_eigenvalue(matrix)


def worst_case_disruption(
    model: NetworkModel,
    monitors: MonitorSet,
    attack: AttackScenario,
    mode: CertificateMode = CertificateMode.FULL,
    *,
    certified: bool = False,
    tol: SolverTolerances | None = None,
) -> DisruptionResult:
    mode = CertificateMode(mode)
    if mode is CertificateMode.DIAGONAL and not certified:
        raise ScalabilityNotCertified(
            "diagonal certificates need a holding scalability certificate; run check_scalability_condition first"
        )
    problem = build_disruption_problem(model, monitors, attack, mode)
    solution = solve(problem, tol)
    if not solution.is_optimal:
        raise SolverFailure(f"{problem.name} ended with status {solution.status.value}", solution.status)

    result = DisruptionResult(
        value=solution.objective_value,
        gammas={node: solution.values[_gamma_name(node)] for node in monitors.nodes},
        psis={node: solution.values[_psi_name(node)] for node in attack.nodes},
        certificate=solution.values["P"],
        mode=mode,
        solver_status=solution.status,
        monitors=monitors,
        attack=attack,
        solve_seconds=solution.solve_seconds,
    )
    LOGGER.debug("V(%s, %s) = %.9g [%s]", list(monitors.nodes), list(attack.nodes), result.value, mode.value)
    return result


def v_infinity(
    model: NetworkModel,
    attack: AttackScenario,
    mode: CertificateMode = CertificateMode.FULL,
    *,
    certified: bool = False,
    tol: SolverTolerances | None = None,
) -> float:
    """Worst-case disruption with no monitors (per-channel energy bounds only)."""
    return worst_case_disruption(model, MonitorSet.empty(), attack, mode, certified=certified, tol=tol).value


def _check_attack_cap(n: int, alpha: int, cap: int | None) -> int:
    cap = cap if cap is not None else get_settings().attack_enumeration_cap
    count = math.comb(n, alpha)
    if count > cap:
        raise EnumerationCapExceeded(f"attack sets of size {alpha} over {n} nodes", count, cap)
    return count


def pick_argmax(values: List[Tuple[Tuple[int, ...], float]]) -> Tuple[Tuple[int, ...], float]:
    """Largest value; among near-ties the lexicographically smallest key wins."""
    best = max(value for _, value in values)
    threshold = best - TIE_TOLERANCE * max(1.0, abs(best))
    key = min(nodes for nodes, value in values if value >= threshold)
    return key, best


def worst_case_over_attacks(
    model: NetworkModel,
    monitors: MonitorSet,
    alpha: int,
    threat: ThreatModel,
    mode: CertificateMode = CertificateMode.FULL,
    *,
    certified: bool = False,
    jobs: int | None = None,
    cap: int | None = None,
    tol: SolverTolerances | None = None,
) -> TypeWorstCase:
    n = model.n
    if not 0 < alpha <= n:
        raise ValueError(f"attack size must lie in (0, {n}], got {alpha}")
    _check_attack_cap(n, alpha, cap)
    attacks = list(threat.attack_sets(alpha, n))
    jobs = get_settings().jobs if jobs is None else jobs

    def _evaluate(attack: AttackScenario) -> DisruptionResult:
        return worst_case_disruption(model, monitors, attack, mode, certified=certified, tol=tol)

    results = run_parallel(_evaluate, attacks, jobs)
    per_attack = {result.attack.nodes: result.value for result in results}
    key, best = pick_argmax(list(per_attack.items()))
    return TypeWorstCase(
        alpha=alpha,
        value=best,
        argmax_attack=AttackScenario(key, threat.energy_bound),
        per_attack_values=per_attack,
        per_attack_gammas={result.attack.nodes: dict(result.gammas) for result in results},
    )


def sensor_cost(model: NetworkModel, monitors: MonitorSet) -> float:
    return float(math.fsum(model.sensor_costs[node] for node in monitors.nodes))


def defense_cost(
    model: NetworkModel,
    monitors: MonitorSet,
    threat: ThreatModel,
    mode: CertificateMode = CertificateMode.FULL,
    *,
    certified: bool = False,
    jobs: int | None = None,
    cap: int | None = None,
    tol: SolverTolerances | None = None,
) -> DefenseCost:
    """U(M|alpha_k) = c_s(M) + Q(M|alpha_k) per type and R(M) = sum_k phi_k U(M|alpha_k)."""
    threat.check_against(model.n)
    monitors.check_against(model.n)
    cost = sensor_cost(model, monitors)
    worst_cases: Dict[int, TypeWorstCase] = {}
    per_type_q: Dict[int, float] = {}
    per_type_u: Dict[int, float] = {}
    for attack_type in threat.types:
        worst = worst_case_over_attacks(
            model, monitors, attack_type.alpha, threat, mode, certified=certified, jobs=jobs, cap=cap, tol=tol
        )
        worst_cases[attack_type.alpha] = worst
        per_type_q[attack_type.alpha] = worst.value
        per_type_u[attack_type.alpha] = cost + worst.value
    expected = math.fsum(item.probability * per_type_u[item.alpha] for item in threat.types)
    return DefenseCost(
        monitors=monitors,
        sensor_cost=cost,
        per_type_q=per_type_q,
        per_type_u=per_type_u,
        worst_cases=worst_cases,
        expected_cost=expected,
    )


def max_v_infinity(
    model: NetworkModel,
    threat: ThreatModel,
    alphas: List[int] | None = None,
    mode: CertificateMode = CertificateMode.FULL,
    *,
    certified: bool = False,
    jobs: int | None = None,
    cap: int | None = None,
    tol: SolverTolerances | None = None,
) -> TypeWorstCase:
    """Largest V_inf over the attack sets of the given sizes (every type by default)."""
    alphas = alphas or [item.alpha for item in threat.types]
    candidates: List[Tuple[Tuple[int, ...], float]] = []
    per_attack: Dict[Tuple[int, ...], float] = {}
    for alpha in alphas:
        worst = worst_case_over_attacks(
            model, MonitorSet.empty(), alpha, threat, mode, certified=certified, jobs=jobs, cap=cap, tol=tol
        )
        per_attack.update(worst.per_attack_values)
        candidates.append((worst.argmax_attack.nodes, worst.value))
    key, best = pick_argmax(candidates)
    return TypeWorstCase(
        alpha=len(key),
        value=best,
        argmax_attack=AttackScenario(key, threat.energy_bound),
        per_attack_values=per_attack,
    )


def multiplier_bound(
    model: NetworkModel,
    threat: ThreatModel,
    mode: CertificateMode = CertificateMode.FULL,
    *,
    surrogate: float | None = None,
    certified: bool = False,
    jobs: int | None = None,
    cap: int | None = None,
    tol: SolverTolerances | None = None,
) -> float:
    """Big-M constant dominating every optimal stealthiness multiplier.

    Exact mode: max over types and attack sets of V_inf, divided by the smallest threshold.
    A surrogate must exceed the exact value; it is accepted without verification.
    """
    if surrogate is not None:
        if not surrogate > 0:
            raise ValueError(f"big-M surrogate must be positive, got {surrogate}")
        LOGGER.warning(
            "ATENCAO: big-M substituto %.6g usado sem verificacao; a otimalidade depende de ele "
            "superar o valor exato",
            surrogate,
        )
        return float(surrogate)
    threat.check_against(model.n)
    worst = max_v_infinity(model, threat, None, mode, certified=certified, jobs=jobs, cap=cap, tol=tol)
    bound = worst.value / float(np.min(model.thresholds))
    LOGGER.info("Big-M exato: %.9g (V_inf max %.9g em %s)", bound, worst.value, list(worst.argmax_attack.nodes))
    return bound
