"""Brute-force upper bound on the worst-case disruption without a conic solver.

For fixed multipliers (gamma, psi) the dissipation LMI

    [[-L^T P - P L + W^2 - diag(gamma on M),  P B ],
     [ B^T P,                                -diag(psi)]]  <= 0,   P >= 0

is feasible iff the associated Riccati inequality admits a positive semidefinite
solution, which is decided from the Hamiltonian matrix: no imaginary-axis eigenvalues
and a PSD maximal solution extracted from its ordered Schur form. The candidate is
then checked directly by eigenvalues, so every accepted grid point is a certified
dual-feasible point and the grid minimum is a valid upper bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, schur

from app.network.types import AttackScenario, MonitorSet, NetworkModel
from app.sdp.solver import max_eigenvalue

LOGGER = logging.getLogger(__name__)

DEFAULT_POINTS = 100
DEFAULT_SPAN = (1e-4, 1e4)
DEFAULT_REFINEMENTS = 2
_IMAGINARY_AXIS_TOL = 1e-9
_CERTIFICATE_TOL = 1e-9


@dataclass(frozen=True)
class OracleGrid:
    """Log-spaced grids: one per monitor multiplier followed by one per attack channel."""

    gamma_grids: Tuple[np.ndarray, ...]
    psi_grids: Tuple[np.ndarray, ...]
    refinements: int = DEFAULT_REFINEMENTS

    @classmethod
    def default(
        cls,
        model: NetworkModel,
        monitors: MonitorSet,
        attack: AttackScenario,
        points: int = DEFAULT_POINTS,
        refinements: int = DEFAULT_REFINEMENTS,
    ) -> "OracleGrid":
        """Gamma axes span DEFAULT_SPAN * (E / min delta); psi axes span DEFAULT_SPAN / min delta.

        The psi axes drop the factor E: the optimal psi does not grow with E, and an E-scaled
        floor leaves a psi * E residue of order 1e-4 * E**2 / min delta in the bound.
        """
        delta_min = float(np.min(model.thresholds))
        gamma_scale = attack.energy_bound / delta_min
        psi_scale = 1.0 / delta_min
        gamma = np.logspace(
            np.log10(DEFAULT_SPAN[0] * gamma_scale), np.log10(DEFAULT_SPAN[1] * gamma_scale), points
        )
        psi = np.logspace(np.log10(DEFAULT_SPAN[0] * psi_scale), np.log10(DEFAULT_SPAN[1] * psi_scale), points)
        return cls(
            gamma_grids=tuple(gamma for _ in monitors.nodes),
            psi_grids=tuple(psi for _ in attack.nodes),
            refinements=refinements,
        )

    @classmethod
    def constant(cls, monitors: MonitorSet, attack: AttackScenario, value: float) -> "OracleGrid":
        point = np.array([value])
        return cls(tuple(point for _ in monitors.nodes), tuple(point for _ in attack.nodes), refinements=0)


@dataclass
class OracleResult:
    value: float
    inconclusive: bool
    gammas: Dict[int, float] = field(default_factory=dict)
    psis: Dict[int, float] = field(default_factory=dict)
    evaluated: int = 0
    feasible: int = 0


def _riccati_certificate(
    laplacian: np.ndarray,
    weights_sq: np.ndarray,
    monitor_penalty: np.ndarray,
    input_matrix: np.ndarray,
    psi: np.ndarray,
) -> np.ndarray | None:
    """Maximal solution of the dissipation Riccati equation, or None when it does not exist."""
    n = laplacian.shape[0]
    state = -laplacian
    q = np.diag(weights_sq - monitor_penalty)
    gain = input_matrix @ np.diag(1.0 / psi) @ input_matrix.T
    hamiltonian = np.block([[state, gain], [-q, -state.T]])
    try:
        eigenvalues = np.linalg.eigvals(hamiltonian)
    except LinAlgError:
        return None
    if np.any(np.abs(eigenvalues.real) <= _IMAGINARY_AXIS_TOL * max(1.0, np.max(np.abs(eigenvalues)))):
        return None
    try:
        _, basis, stable_count = schur(hamiltonian, output="real", sort="rhp")
    except (LinAlgError, ValueError):
        return None
    if stable_count != n:
        return None
    top, bottom = basis[:n, :n], basis[n:, :n]
    try:
        certificate = np.linalg.solve(top.T, bottom.T).T
    except LinAlgError:
        return None
    return (certificate + certificate.T) / 2.0


def dissipation_matrix(
    laplacian: np.ndarray,
    weights_sq: np.ndarray,
    monitor_penalty: np.ndarray,
    input_matrix: np.ndarray,
    psi: np.ndarray,
    certificate: np.ndarray,
) -> np.ndarray:
    top_left = -laplacian.T @ certificate - certificate @ laplacian + np.diag(weights_sq - monitor_penalty)
    coupling = certificate @ input_matrix
    return np.block([[top_left, coupling], [coupling.T, -np.diag(psi)]])


def _point_is_feasible(
    laplacian: np.ndarray,
    weights_sq: np.ndarray,
    monitor_penalty: np.ndarray,
    input_matrix: np.ndarray,
    psi: np.ndarray,
) -> bool:
    certificate = _riccati_certificate(laplacian, weights_sq, monitor_penalty, input_matrix, psi)
    if certificate is None:
        return False
    if certificate.size and float(np.linalg.eigvalsh(certificate)[0]) < -_CERTIFICATE_TOL:
        return False
    matrix = dissipation_matrix(laplacian, weights_sq, monitor_penalty, input_matrix, psi, certificate)
    scale = max(1.0, float(np.max(np.abs(matrix))))
    return max_eigenvalue(matrix) <= _CERTIFICATE_TOL * scale


def _zoom(grid: np.ndarray, incumbent: float) -> np.ndarray:
    """Two log-steps either side of the incumbent, resampled at the same density."""
    if grid.size < 2:
        return grid
    log_grid = np.log10(grid)
    step = float(np.mean(np.diff(log_grid)))
    center = np.log10(incumbent)
    zoomed = np.logspace(center - 2 * step, center + 2 * step, grid.size)
    return np.unique(np.append(zoomed, incumbent))


def _search(
    model: NetworkModel,
    monitors: MonitorSet,
    attack: AttackScenario,
    gamma_grids: Sequence[np.ndarray],
    psi_grids: Sequence[np.ndarray],
) -> Tuple[float, Tuple[float, ...] | None, int, int]:
    n = model.n
    laplacian = model.laplacian
    weights_sq = model.weights**2
    input_matrix = attack.input_matrix(n)
    thresholds = model.thresholds[list(monitors.nodes)]
    energies = attack.channel_energy
    m = len(monitors.nodes)

    grids = list(gamma_grids) + list(psi_grids)
    best_value = float("inf")
    best_point: Tuple[float, ...] | None = None
    evaluated = feasible = 0
    candidates: List[Tuple[float, Tuple[float, ...]]] = []
    for point in product(*grids):
        gamma = np.asarray(point[:m], dtype=float)
        psi = np.asarray(point[m:], dtype=float)
        candidates.append((float(gamma @ thresholds + psi @ energies), point))
    # Cheapest first: the first feasible point is the grid minimum.
    candidates.sort(key=lambda item: item[0])
    for value, point in candidates:
        evaluated += 1
        penalty = np.zeros(n)
        penalty[list(monitors.nodes)] = point[:m]
        if _point_is_feasible(laplacian, weights_sq, penalty, input_matrix, np.asarray(point[m:], dtype=float)):
            feasible += 1
            best_value, best_point = value, tuple(float(item) for item in point)
            break
    return best_value, best_point, evaluated, feasible


def dual_grid_oracle(
    model: NetworkModel,
    monitors: MonitorSet,
    attack: AttackScenario,
    grid: OracleGrid | None = None,
) -> OracleResult:
    """Minimum of the dual objective over grid points whose LMI is certified feasible."""
    monitors.check_against(model.n)
    attack.check_against(model.n)
    grid = grid or OracleGrid.default(model, monitors, attack)
    if len(grid.gamma_grids) != len(monitors.nodes) or len(grid.psi_grids) != len(attack.nodes):
        raise ValueError("oracle grid must provide one axis per monitor and one per attack channel")
    for axis in (*grid.gamma_grids, *grid.psi_grids):
        if np.any(np.asarray(axis) <= 0):
            raise ValueError("oracle grids must be strictly positive")

    gamma_grids = [np.asarray(axis, dtype=float) for axis in grid.gamma_grids]
    psi_grids = [np.asarray(axis, dtype=float) for axis in grid.psi_grids]
    value, point, evaluated, feasible = _search(model, monitors, attack, gamma_grids, psi_grids)
    if point is None:
        LOGGER.info("Oraculo inconclusivo: nenhum ponto da grade e viavel (%s pontos)", evaluated)
        return OracleResult(value=float("inf"), inconclusive=True, evaluated=evaluated)

    m = len(monitors.nodes)
    for _ in range(grid.refinements):
        gamma_grids = [_zoom(axis, point[index]) for index, axis in enumerate(gamma_grids)]
        psi_grids = [_zoom(axis, point[m + index]) for index, axis in enumerate(psi_grids)]
        refined_value, refined_point, refined_evaluated, refined_feasible = _search(
            model, monitors, attack, gamma_grids, psi_grids
        )
        evaluated += refined_evaluated
        feasible += refined_feasible
        if refined_point is not None and refined_value <= value:
            value, point = refined_value, refined_point

    return OracleResult(
        value=value,
        inconclusive=False,
        gammas={node: point[index] for index, node in enumerate(monitors.nodes)},
        psis={node: point[m + index] for index, node in enumerate(attack.nodes)},
        evaluated=evaluated,
        feasible=feasible,
    )
