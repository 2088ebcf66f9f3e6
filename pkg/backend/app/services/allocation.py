from __future__ import annotations

from dataclasses import dataclass, field
import heapq
from itertools import combinations
import logging
import math
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from app.config import get_settings
from app.core.errors import EnumerationCapExceeded, SolverFailure
from app.network.types import MonitorSet, NetworkModel, ThreatModel
from app.sdp.problem import CongruenceTerm, LmiConstraint, ScalarTerm, SdpProblem, selector
from app.sdp.solver import SolverTolerances, solve
from app.services.disruption import CertificateMode, DefenseCost, defense_cost, dissipation_factors

LOGGER = logging.getLogger(__name__)

GAP_ABSOLUTE = 1e-6
GAP_RELATIVE = 1e-6
COST_TIE_TOLERANCE = 1e-9
BOUND_MONOTONICITY_TOLERANCE = 1e-7
INTEGRALITY_TOLERANCE = 1e-6


@dataclass
class AttackBlock:
    alpha: int
    attack_nodes: Tuple[int, ...]
    omega_names: Tuple[str, ...]
    psi_names: Tuple[str, ...]
    certificate_name: str


@dataclass
class MisdpLayout:
    problem: SdpProblem
    z_names: Tuple[str, ...]
    q_names: Dict[int, str]
    blocks: List[AttackBlock]
    big_m: float


@dataclass
class BranchNodeRecord:
    node_id: int
    parent_id: Optional[int]
    depth: int
    fixed_ones: Tuple[int, ...]
    fixed_zeros: Tuple[int, ...]
    bound: float
    status: str
    branch_variable: Optional[int] = None
    incumbent: float = float("inf")


@dataclass
class AllocationResult:
    z: np.ndarray
    monitors: MonitorSet
    expected_cost: float
    per_type_q: Dict[int, float]
    omegas: Dict[Tuple[int, ...], np.ndarray]
    method: str
    node_count: int
    certified: bool = True
    big_m: Optional[float] = None
    sensor_cost: float = 0.0
    rows: List[Dict[str, Any]] = field(default_factory=list)

    def verify(
        self,
        model: NetworkModel,
        threat: ThreatModel,
        budget: int,
        rtol: float = 1e-6,
    ) -> List[str]:
        """Re-check budget, integrality, the cost identity and big-M linking; returns violations."""
        violations: List[str] = []
        z = np.asarray(self.z, dtype=float)
        if z.shape != (model.n,):
            return [f"z has shape {z.shape}, expected ({model.n},)"]
        if not np.all((z == 0) | (z == 1)):
            violations.append("z is not binary")
        if z.sum() > budget:
            violations.append(f"1'z = {int(z.sum())} exceeds budget {budget}")
        if MonitorSet.from_indicator(z).nodes != self.monitors.nodes:
            violations.append("z does not match the monitor set")
        expected = float(model.sensor_costs @ z) + math.fsum(
            item.probability * self.per_type_q[item.alpha] for item in threat.types
        )
        if abs(expected - self.expected_cost) > rtol * max(1.0, abs(expected)):
            violations.append(f"expected cost {self.expected_cost} differs from kappa'z + sum phi Q = {expected}")
        if self.big_m is not None:
            for nodes, omega in self.omegas.items():
                slack = np.asarray(omega, dtype=float) - self.big_m * z
                if np.any(slack > rtol * max(1.0, self.big_m)):
                    violations.append(f"omega of attack set {list(nodes)} exceeds big-M linking")
        return violations

    def to_payload(self) -> Dict[str, Any]:
        return {
            "z": [int(value) for value in self.z],
            "monitors": list(self.monitors.nodes),
            "budget": self.monitors.budget,
            "expected_cost": self.expected_cost,
            "sensor_cost": self.sensor_cost,
            "per_type_q": {str(alpha): value for alpha, value in self.per_type_q.items()},
            "omegas": {"-".join(str(n) for n in nodes): list(map(float, omega)) for nodes, omega in self.omegas.items()},
            "method": self.method,
            "node_count": self.node_count,
            "certified": self.certified,
            "big_m": self.big_m,
        }

    @classmethod
    def from_payload(cls, payload: Dict[str, Any]) -> "AllocationResult":
        omegas = {
            tuple(int(part) for part in key.split("-")): np.asarray(values, dtype=float)
            for key, values in payload.get("omegas", {}).items()
        }
        return cls(
            z=np.asarray(payload["z"], dtype=int),
            monitors=MonitorSet(tuple(payload["monitors"]), payload.get("budget")),
            expected_cost=float(payload["expected_cost"]),
            per_type_q={int(alpha): float(value) for alpha, value in payload["per_type_q"].items()},
            omegas=omegas,
            method=str(payload["method"]),
            node_count=int(payload["node_count"]),
            certified=bool(payload.get("certified", True)),
            big_m=None if payload.get("big_m") is None else float(payload["big_m"]),
            sensor_cost=float(payload.get("sensor_cost", 0.0)),
        )


def _count_attack_blocks(model: NetworkModel, threat: ThreatModel, cap: int | None) -> int:
    cap = cap if cap is not None else get_settings().attack_enumeration_cap
    count = threat.attack_set_count(model.n)
    if count > cap:
        raise EnumerationCapExceeded("attack sets over all types", count, cap)
    return count


def assemble_misdp(
    model: NetworkModel,
    threat: ThreatModel,
    budget: int,
    big_m: float,
    mode: CertificateMode = CertificateMode.FULL,
    *,
    cap: int | None = None,
) -> MisdpLayout:
    """Joint program: min kappa'z + sum phi_k Q_k with one dissipation block per admissible attack set."""
    n = model.n
    threat.check_against(n)
    if budget < 0:
        raise ValueError(f"budget must be non-negative, got {budget}")
    if not big_m > 0:
        raise ValueError(f"big-M must be positive, got {big_m}")
    _count_attack_blocks(model, threat, cap)
    mode = CertificateMode(mode)

    problem = SdpProblem(name=f"misdp[n={n},beta={budget},{mode.value}]")
    z_names = tuple(f"z_{node}" for node in range(n))
    for node, name in enumerate(z_names):
        problem.add_scalar(name, binary=True)
        problem.add_objective(name, model.sensor_costs[node])
    problem.add_linear("budget", {name: 1.0 for name in z_names}, -float(budget))

    q_names: Dict[int, str] = {}
    for attack_type in threat.types:
        name = f"Q_{attack_type.alpha}"
        problem.add_scalar(name)
        problem.add_objective(name, attack_type.probability)
        q_names[attack_type.alpha] = name

    blocks: List[AttackBlock] = []
    for attack_type in threat.types:
        for attack in threat.attack_sets(attack_type.alpha, n):
            label = attack.label()
            size = n + attack.alpha
            constant = np.zeros((size, size))
            constant[:n, :n] = np.diag(model.weights**2)
            lmi = LmiConstraint(f"dissipation[{label}]", constant)

            omega_names = tuple(f"omega_{label}_{node}" for node in range(n))
            energy_row: Dict[str, float] = {}
            for node, name in enumerate(omega_names):
                problem.add_scalar(name)
                problem.add_linear(f"link[{label},{node}]", {name: 1.0, z_names[node]: -big_m})
                lmi.scalar_terms.append(ScalarTerm(name, -selector(size, node)))
                energy_row[name] = float(model.thresholds[node])

            psi_names = tuple(f"psi_{label}_{node}" for node in attack.nodes)
            for column, (name, energy) in enumerate(zip(psi_names, attack.channel_energy)):
                problem.add_scalar(name, strictly_positive=True)
                lmi.scalar_terms.append(ScalarTerm(name, -selector(size, n + column)))
                energy_row[name] = float(energy)

            energy_row[q_names[attack_type.alpha]] = -1.0
            problem.add_linear(f"epigraph[{label}]", energy_row)

            certificate_name = f"P_{label}"
            problem.add_matrix(certificate_name, n, diagonal=mode is CertificateMode.DIAGONAL)
            left, right = dissipation_factors(model, attack)
            lmi.congruence_terms.append(CongruenceTerm(certificate_name, left, right))
            problem.add_lmi(lmi)
            blocks.append(AttackBlock(attack_type.alpha, attack.nodes, omega_names, psi_names, certificate_name))

    return MisdpLayout(problem=problem, z_names=z_names, q_names=q_names, blocks=blocks, big_m=float(big_m))


def _omegas_from_cost(model: NetworkModel, cost: DefenseCost) -> Dict[Tuple[int, ...], np.ndarray]:
    omegas: Dict[Tuple[int, ...], np.ndarray] = {}
    for worst in cost.worst_cases.values():
        for nodes, gammas in worst.per_attack_gammas.items():
            omega = np.zeros(model.n)
            for node, gamma in gammas.items():
                omega[node] = gamma
            omegas[nodes] = omega
    return omegas


def _result_from_cost(
    model: NetworkModel,
    cost: DefenseCost,
    method: str,
    node_count: int,
    *,
    certified: bool,
    big_m: float | None,
    rows: List[Dict[str, Any]],
) -> AllocationResult:
    return AllocationResult(
        z=cost.monitors.indicator(model.n),
        monitors=cost.monitors,
        expected_cost=cost.expected_cost,
        per_type_q=dict(cost.per_type_q),
        omegas=_omegas_from_cost(model, cost),
        method=method,
        node_count=node_count,
        certified=certified,
        big_m=big_m,
        sensor_cost=cost.sensor_cost,
        rows=rows,
    )


def _cost_row(cost: DefenseCost) -> Dict[str, Any]:
    row: Dict[str, Any] = {
        "monitor_set": "-".join(str(node) for node in cost.monitors.nodes),
        "size": len(cost.monitors),
        "sensor_cost": cost.sensor_cost,
    }
    for alpha, value in cost.per_type_q.items():
        row[f"Q_{alpha}"] = value
    row["expected_cost"] = cost.expected_cost
    return row


def _is_better(candidate: float, incumbent: float) -> bool:
    return candidate < incumbent - COST_TIE_TOLERANCE * max(1.0, abs(incumbent))


def optimal_allocation_enumerate(
    model: NetworkModel,
    threat: ThreatModel,
    budget: int,
    mode: CertificateMode = CertificateMode.FULL,
    *,
    certified: bool = False,
    jobs: int | None = None,
    cap: int | None = None,
    tol: SolverTolerances | None = None,
) -> AllocationResult:
    """Exhaustive search over every monitor set with |M| <= budget, the empty set included."""
    n = model.n
    if budget < 0:
        raise ValueError(f"budget must be non-negative, got {budget}")
    threat.check_against(n)
    limit = min(budget, n)
    cap = cap if cap is not None else get_settings().allocation_enumeration_cap
    count = sum(math.comb(n, size) for size in range(limit + 1))
    if count > cap:
        raise EnumerationCapExceeded(f"monitor sets with at most {budget} nodes", count, cap)

    LOGGER.info("Enumerando %s conjuntos de monitores (n=%s, beta=%s)", count, n, budget)
    best: DefenseCost | None = None
    rows: List[Dict[str, Any]] = []
    for size in range(limit + 1):
        for nodes in combinations(range(n), size):
            cost = defense_cost(
                model, MonitorSet(nodes, budget), threat, mode, certified=certified, jobs=jobs, tol=tol
            )
            rows.append(_cost_row(cost))
            if best is None or _is_better(cost.expected_cost, best.expected_cost):
                best = cost
    assert best is not None
    LOGGER.info("Melhor conjunto por enumeracao: %s (R=%.9g)", list(best.monitors.nodes), best.expected_cost)
    return _result_from_cost(model, best, "enumerate", count, certified=True, big_m=None, rows=rows)


@dataclass(order=True)
class _OpenNode:
    bound: float
    node_id: int
    parent_id: Optional[int] = field(compare=False, default=None)
    depth: int = field(compare=False, default=0)
    fixed_ones: Tuple[int, ...] = field(compare=False, default=())
    fixed_zeros: Tuple[int, ...] = field(compare=False, default=())


class _ExactEvaluator:
    """defense_cost with a per-run cache keyed by the monitor set."""

    def __init__(self, model, threat, budget, mode, certified, jobs, tol) -> None:
        self._model = model
        self._threat = threat
        self._budget = budget
        self._mode = mode
        self._certified = certified
        self._jobs = jobs
        self._tol = tol
        self._cache: Dict[Tuple[int, ...], DefenseCost] = {}

    def __call__(self, nodes: Tuple[int, ...]) -> DefenseCost:
        nodes = tuple(sorted(nodes))
        cached = self._cache.get(nodes)
        if cached is None:
            cached = defense_cost(
                self._model,
                MonitorSet(nodes, self._budget),
                self._threat,
                self._mode,
                certified=self._certified,
                jobs=self._jobs,
                tol=self._tol,
            )
            self._cache[nodes] = cached
        return cached

    @property
    def evaluations(self) -> int:
        return len(self._cache)


def _round_and_repair(z: np.ndarray, fixed_ones: Tuple[int, ...], budget: int) -> Tuple[int, ...]:
    """Round at 0.5, then drop the lowest relaxed entries (never a fixed one) until the budget holds."""
    chosen = set(int(i) for i in np.flatnonzero(z >= 0.5)) | set(fixed_ones)
    removable = sorted((float(z[i]), i) for i in chosen if i not in fixed_ones)
    while len(chosen) > budget and removable:
        _, node = removable.pop(0)
        chosen.discard(node)
    return tuple(sorted(chosen))


def _within_gap(bound: float, incumbent: float) -> bool:
    gap = incumbent - bound
    return gap <= GAP_ABSOLUTE or gap <= GAP_RELATIVE * max(abs(incumbent), 1e-12)


def optimal_allocation_misdp(
    model: NetworkModel,
    threat: ThreatModel,
    budget: int,
    big_m: float,
    mode: CertificateMode = CertificateMode.FULL,
    *,
    certified: bool = False,
    jobs: int | None = None,
    cap: int | None = None,
    tol: SolverTolerances | None = None,
    max_nodes: int = 10_000,
) -> AllocationResult:
    """Best-first branch-and-bound on the binary monitor vector of the joint mixed-integer SDP.

    Relaxations keep z in [0, 1]; leaves (every entry fixed, or the budget exhausted by
    fixed ones) are evaluated exactly through defense_cost. A relaxation the solver cannot
    resolve keeps its parent's bound and is branched instead of pruned.
    """
    n = model.n
    layout = assemble_misdp(model, threat, budget, big_m, mode, cap=cap)
    evaluate = _ExactEvaluator(model, threat, budget, mode, certified, jobs, tol)
    records: List[BranchNodeRecord] = []
    unresolved_leaves = 0

    incumbent = evaluate(())
    LOGGER.info("Branch-and-bound iniciado (n=%s, beta=%s, big-M=%.6g); incumbente vazio R=%.9g",
                n, budget, big_m, incumbent.expected_cost)

    def _offer(nodes: Tuple[int, ...]) -> None:
        nonlocal incumbent
        candidate = evaluate(nodes)
        if _is_better(candidate.expected_cost, incumbent.expected_cost) or (
            not _is_better(incumbent.expected_cost, candidate.expected_cost)
            and (len(nodes), nodes) < (len(incumbent.monitors.nodes), incumbent.monitors.nodes)
        ):
            incumbent = candidate
            LOGGER.info("Nova incumbente %s com R=%.9g", list(nodes), candidate.expected_cost)

    heap: List[_OpenNode] = [_OpenNode(bound=-math.inf, node_id=0)]
    next_id = 1
    explored = 0
    exhausted = True

    while heap:
        node = heapq.heappop(heap)
        if _within_gap(node.bound, incumbent.expected_cost):
            records.append(BranchNodeRecord(node.node_id, node.parent_id, node.depth, node.fixed_ones,
                                            node.fixed_zeros, node.bound, "pruned", None, incumbent.expected_cost))
            continue
        if explored >= max_nodes:
            exhausted = False
            LOGGER.warning("Limite de %s nos atingido; resultado nao certificado", max_nodes)
            break
        explored += 1

        fixed_zeros = node.fixed_zeros
        if len(node.fixed_ones) >= budget:
            fixed_zeros = tuple(sorted(set(range(n)) - set(node.fixed_ones)))
        free = [i for i in range(n) if i not in node.fixed_ones and i not in fixed_zeros]

        if not free:
            try:
                leaf = evaluate(node.fixed_ones)
            except SolverFailure as exc:
                unresolved_leaves += 1
                LOGGER.warning("Folha %s nao resolvida: %s", list(node.fixed_ones), exc)
                records.append(BranchNodeRecord(node.node_id, node.parent_id, node.depth, node.fixed_ones,
                                                fixed_zeros, node.bound, "unresolved", None, incumbent.expected_cost))
                continue
            _offer(node.fixed_ones)
            records.append(BranchNodeRecord(node.node_id, node.parent_id, node.depth, node.fixed_ones,
                                            fixed_zeros, leaf.expected_cost, "leaf", None, incumbent.expected_cost))
            continue

        bounds = {layout.z_names[i]: (1.0, 1.0) for i in node.fixed_ones}
        bounds.update({layout.z_names[i]: (0.0, 0.0) for i in fixed_zeros})
        solution = solve(layout.problem.restricted(bounds), tol, relax_binaries=True)

        if solution.is_optimal:
            bound = solution.objective_value
            if bound < node.bound - BOUND_MONOTONICITY_TOLERANCE * max(1.0, abs(node.bound)):
                LOGGER.warning("Limitante do no %s (%.9g) abaixo do pai (%.9g)", node.node_id, bound, node.bound)
            bound = max(bound, node.bound)
            z = np.array([solution.values[name] for name in layout.z_names])
            _offer(_round_and_repair(z, node.fixed_ones, budget))
            if _within_gap(bound, incumbent.expected_cost):
                records.append(BranchNodeRecord(node.node_id, node.parent_id, node.depth, node.fixed_ones,
                                                fixed_zeros, bound, "pruned", None, incumbent.expected_cost))
                continue
            fractionality = {i: min(z[i], 1.0 - z[i]) for i in free}
            branch_on = max(free, key=lambda i: (fractionality[i], -i))
            if fractionality[branch_on] <= INTEGRALITY_TOLERANCE:
                integral = tuple(sorted(set(node.fixed_ones) | {i for i in free if z[i] >= 0.5}))
                _offer(integral)
                # An integral relaxation closes the node unless it disagrees with its exact value.
                if evaluate(integral).expected_cost <= bound + GAP_ABSOLUTE + GAP_RELATIVE * abs(bound):
                    records.append(BranchNodeRecord(node.node_id, node.parent_id, node.depth, node.fixed_ones,
                                                    fixed_zeros, bound, "integral", None, incumbent.expected_cost))
                    continue
                branch_on = free[0]
            status = "branched"
        else:
            LOGGER.warning("Relaxacao do no %s nao resolvida (%s); ramificando sem poda",
                           node.node_id, solution.status.value)
            bound = node.bound
            branch_on = free[0]
            status = "unresolved-relaxation"

        records.append(BranchNodeRecord(node.node_id, node.parent_id, node.depth, node.fixed_ones,
                                        fixed_zeros, bound, status, branch_on, incumbent.expected_cost))
        children = (
            _OpenNode(bound, next_id, node.node_id, node.depth + 1,
                      tuple(sorted(node.fixed_ones + (branch_on,))), fixed_zeros),
            _OpenNode(bound, next_id + 1, node.node_id, node.depth + 1,
                      node.fixed_ones, tuple(sorted(fixed_zeros + (branch_on,)))),
        )
        next_id += 2
        for child in children:
            heapq.heappush(heap, child)

    is_certified = exhausted and unresolved_leaves == 0
    if not is_certified:
        LOGGER.warning("Resultado do branch-and-bound NAO certificado (folhas nao resolvidas: %s)", unresolved_leaves)
    LOGGER.info(
        "Branch-and-bound concluido: %s nos, %s avaliacoes exatas, melhor %s com R=%.9g",
        explored,
        evaluate.evaluations,
        list(incumbent.monitors.nodes),
        incumbent.expected_cost,
    )
    rows = [_record_row(record) for record in records]
    return _result_from_cost(
        model, incumbent, "branch-and-bound", explored, certified=is_certified, big_m=big_m, rows=rows
    )


def _record_row(record: BranchNodeRecord) -> Dict[str, Any]:
    return {
        "node_id": record.node_id,
        "parent_id": record.parent_id,
        "depth": record.depth,
        "fixed_ones": "-".join(str(i) for i in record.fixed_ones),
        "fixed_zeros": "-".join(str(i) for i in record.fixed_zeros),
        "bound": record.bound,
        "status": record.status,
        "branch_variable": record.branch_variable,
        "incumbent": record.incumbent,
    }


BNB_COLUMNS = (
    "node_id",
    "parent_id",
    "depth",
    "fixed_ones",
    "fixed_zeros",
    "bound",
    "status",
    "branch_variable",
    "incumbent",
)
