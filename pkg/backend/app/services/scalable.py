from __future__ import annotations

from dataclasses import dataclass, field
import logging
from typing import Any, Dict, List, Mapping, Sequence

import numpy as np

from app.core.errors import TuningError
from app.network.types import AttackScenario, MonitorSet, NetworkModel, ThreatModel
from app.sdp.oracle import dissipation_matrix
from app.sdp.solver import SolverTolerances, check_lmi_feasibility
from app.services.disruption import CertificateMode, max_v_infinity

LOGGER = logging.getLogger(__name__)

KYP_TOLERANCE = 1e-6
MONOTONICITY_TOLERANCE = 1e-9
DEFAULT_ETA0 = 0.1
DEFAULT_MAX_ITERS = 30
BISECTION_WIDTH = 1e-3


@dataclass
class ScalabilityCertificate:
    holds: bool
    margin: float
    worst_attack: AttackScenario
    max_v_infinity: float
    delta_min: float
    scope: str


@dataclass
class TuningResult:
    model: NetworkModel
    eta: float
    certificate: ScalabilityCertificate
    history: List[Dict[str, Any]] = field(default_factory=list)


def check_scalability_condition(
    model: NetworkModel,
    threat: ThreatModel,
    scope: MonitorSet | None = None,
    *,
    jobs: int | None = None,
    cap: int | None = None,
    tol: SolverTolerances | None = None,
) -> ScalabilityCertificate:
    """min_i w_i^2 >= max_A V_inf(A) / min delta, with the minimum over every node unless a monitor set is given.

    Only the largest attack type is enumerated; V_inf is non-decreasing in the attack set.
    """
    threat.check_against(model.n)
    if scope is None:
        delta_min = float(np.min(model.thresholds))
        scope_label = "all-nodes"
    else:
        if not scope.nodes:
            raise ValueError("monitor-set scope needs at least one monitored node")
        scope.check_against(model.n)
        delta_min = float(np.min(model.thresholds[list(scope.nodes)]))
        scope_label = "monitors:" + "-".join(str(node) for node in scope.nodes)

    worst = max_v_infinity(
        model, threat, [threat.largest_alpha], CertificateMode.FULL, jobs=jobs, cap=cap, tol=tol
    )
    margin = float(np.min(model.weights**2)) - worst.value / delta_min
    certificate = ScalabilityCertificate(
        holds=margin >= 0,
        margin=margin,
        worst_attack=worst.argmax_attack,
        max_v_infinity=worst.value,
        delta_min=delta_min,
        scope=scope_label,
    )
    LOGGER.info(
        "Condicao de escalabilidade: margem=%.9g (V_inf max=%.9g em %s) -> %s",
        margin,
        worst.value,
        list(worst.argmax_attack.nodes),
        "valida" if certificate.holds else "violada",
    )
    return certificate


def tune_self_loops(
    model: NetworkModel,
    threat: ThreatModel,
    *,
    eta0: float = DEFAULT_ETA0,
    max_iters: int = DEFAULT_MAX_ITERS,
    shrink_to_margin: bool = True,
    jobs: int | None = None,
    cap: int | None = None,
    tol: SolverTolerances | None = None,
) -> TuningResult:
    """Raise every self-loop gain by a common eta until the scalability condition holds.

    eta doubles from eta0; with `shrink_to_margin` the last bracket is bisected down to
    BISECTION_WIDTH. The largest V_inf must strictly decrease along the doubling phase.
    """
    if not eta0 > 0:
        raise ValueError(f"eta0 must be positive, got {eta0}")

    def _check(eta: float) -> ScalabilityCertificate:
        candidate = model.with_self_loops(model.self_loops + eta)
        return check_scalability_condition(candidate, threat, jobs=jobs, cap=cap, tol=tol)

    history: List[Dict[str, Any]] = []

    def _log(phase: str, eta: float, certificate: ScalabilityCertificate) -> None:
        history.append(
            {
                "phase": phase,
                "eta": eta,
                "max_v_infinity": certificate.max_v_infinity,
                "margin": certificate.margin,
                "holds": certificate.holds,
            }
        )
        LOGGER.info("Ajuste [%s] eta=%.6g margem=%.9g", phase, eta, certificate.margin)

    certificate = _check(0.0)
    _log("initial", 0.0, certificate)
    if certificate.holds:
        return TuningResult(model=model, eta=0.0, certificate=certificate, history=history)

    previous = certificate.max_v_infinity
    lower, eta = 0.0, float(eta0)
    for _ in range(max_iters):
        certificate = _check(eta)
        _log("doubling", eta, certificate)
        if certificate.max_v_infinity >= previous + MONOTONICITY_TOLERANCE * max(1.0, abs(previous)):
            raise TuningError(
                f"max V_inf did not decrease at eta={eta} ({certificate.max_v_infinity} >= {previous})",
                certificate.margin,
            )
        previous = certificate.max_v_infinity
        if certificate.holds:
            break
        lower, eta = eta, eta * 2.0
    else:
        raise TuningError(
            f"scalability condition still violated after {max_iters} doublings (eta={eta / 2.0})",
            certificate.margin,
        )

    upper, upper_certificate = eta, certificate
    if shrink_to_margin:
        while upper - lower > BISECTION_WIDTH:
            middle = (lower + upper) / 2.0
            certificate = _check(middle)
            _log("bisection", middle, certificate)
            if certificate.holds:
                upper, upper_certificate = middle, certificate
            else:
                lower = middle

    tuned = model.with_self_loops(model.self_loops + upper)
    LOGGER.info("Ganhos de auto-laco ajustados com eta=%.6g", upper)
    return TuningResult(model=tuned, eta=upper, certificate=upper_certificate, history=history)


def verify_positive_system(
    model: NetworkModel,
    attack: AttackScenario,
    monitors: MonitorSet,
    gammas: Mapping[int, float] | None = None,
) -> bool:
    """-L Metzler, B >= 0 and the stacked output [W; sqrt(gamma) selectors] >= 0."""
    state = -model.laplacian
    off_diagonal = state - np.diag(np.diag(state))
    if np.any(off_diagonal < 0):
        return False
    if np.any(attack.input_matrix(model.n) < 0):
        return False
    selectors = np.zeros((len(monitors.nodes), model.n))
    for row, node in enumerate(monitors.nodes):
        gamma = 1.0 if gammas is None else float(gammas[node])
        if gamma < 0:
            return False
        selectors[row, node] = np.sqrt(gamma)
    outputs = np.vstack([np.diag(model.weights), selectors])
    return bool(np.all(outputs >= 0))


def kyp_lmi_matrix(
    model: NetworkModel,
    attack: AttackScenario,
    monitors: MonitorSet,
    gammas: Mapping[int, float],
    psis: Mapping[int, float],
    certificate: Sequence[float] | np.ndarray,
) -> np.ndarray:
    """Positive-system KYP block with A = -L, C1 = sqrt(gamma) selectors, C2 = W and Gamma = diag(psi)."""
    diagonal = np.asarray(certificate, dtype=float)
    if diagonal.ndim == 2:
        diagonal = np.diag(diagonal)
    if diagonal.shape != (model.n,):
        raise ValueError(f"certificate must have {model.n} diagonal entries, got shape {diagonal.shape}")
    if set(gammas) != set(monitors.nodes) or set(psis) != set(attack.nodes):
        raise ValueError("multipliers must be given for every monitor and every attack node")
    penalty = np.zeros(model.n)
    for node in monitors.nodes:
        penalty[node] = gammas[node]
    psi = np.array([psis[node] for node in attack.nodes], dtype=float)
    return dissipation_matrix(
        model.laplacian, model.weights**2, penalty, attack.input_matrix(model.n), psi, np.diag(diagonal)
    )


def kyp_certificate_check(
    model: NetworkModel,
    attack: AttackScenario,
    monitors: MonitorSet,
    gammas: Mapping[int, float],
    psis: Mapping[int, float],
    certificate: Sequence[float] | np.ndarray,
    tol: float = KYP_TOLERANCE,
) -> bool:
    matrix = kyp_lmi_matrix(model, attack, monitors, gammas, psis, certificate)
    diagonal = np.asarray(certificate, dtype=float)
    if diagonal.ndim == 2:
        diagonal = np.diag(diagonal)
    if np.any(diagonal <= 0):
        return False
    for node in monitors.nodes:
        if model.weights[node] ** 2 < gammas[node] - tol:
            return False
    return check_lmi_feasibility(matrix, tol)
