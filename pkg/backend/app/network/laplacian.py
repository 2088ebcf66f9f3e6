from __future__ import annotations

from dataclasses import dataclass, field
import logging
from typing import List

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order

from app.network.types import NetworkModel

LOGGER = logging.getLogger(__name__)

HURWITZ_TOLERANCE = 1e-9


def build_laplacian(adjacency: np.ndarray, self_loops: np.ndarray) -> np.ndarray:
    """In-degree Laplacian L = diag(theta) + diag(A 1) - A.

    Row i collects the gains of the edges entering node i, so L @ 1 equals theta.
    """
    adjacency = np.asarray(adjacency, dtype=float)
    self_loops = np.asarray(self_loops, dtype=float)
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise ValueError(f"dimension mismatch: adjacency must be square, got shape {adjacency.shape}")
    if self_loops.shape != (adjacency.shape[0],):
        raise ValueError(
            f"dimension mismatch: {self_loops.shape[0] if self_loops.ndim else 0} self-loops "
            f"for {adjacency.shape[0]} nodes"
        )
    if np.any(adjacency < 0):
        raise ValueError("negative adjacency entry")
    if np.any(np.diag(adjacency) != 0):
        raise ValueError("adjacency diagonal must be zero")
    if np.any(self_loops <= 0):
        raise ValueError("non-positive self-loop")
    return np.diag(self_loops + adjacency.sum(axis=1)) - adjacency


def is_strongly_connected(adjacency: np.ndarray) -> bool:
    """Forward and reverse reachability from node 0 over the nonzero entries."""
    adjacency = np.asarray(adjacency, dtype=float)
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {adjacency.shape}")
    n = adjacency.shape[0]
    if n <= 1:
        return True
    edges = (adjacency != 0).astype(np.int8)
    # A_ij != 0 is an edge j -> i; both sweeps cover every node iff the digraph is strongly connected.
    forward = breadth_first_order(csr_matrix(edges.T), 0, directed=True, return_predecessors=False)
    if forward.shape[0] != n:
        return False
    backward = breadth_first_order(csr_matrix(edges), 0, directed=True, return_predecessors=False)
    return bool(backward.shape[0] == n)


def spectral_abscissa(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return float("-inf")
    return float(np.max(np.linalg.eigvals(matrix).real))


@dataclass
class ValidationReport:
    violations: List[str] = field(default_factory=list)
    spectral_abscissa: float = float("nan")

    @property
    def is_valid(self) -> bool:
        return not self.violations

    @property
    def is_hurwitz(self) -> bool:
        return self.spectral_abscissa < -HURWITZ_TOLERANCE


def validate_network(model: NetworkModel) -> ValidationReport:
    report = ValidationReport()
    adjacency = model.adjacency

    if np.any(np.diag(adjacency) != 0):
        report.violations.append("non-zero adjacency diagonal")
    if np.any(adjacency < 0):
        report.violations.append("negative adjacency entry")
    if np.any(model.self_loops <= 0):
        report.violations.append("non-positive self-loop")
    if np.any(model.weights <= 0):
        report.violations.append("non-positive weight")
    if np.any(model.thresholds <= 0):
        report.violations.append("non-positive threshold")
    if np.any(model.sensor_costs <= 0):
        report.violations.append("non-positive sensor cost")
    if not is_strongly_connected(adjacency):
        report.violations.append("not strongly connected")

    laplacian = model.laplacian
    if model.n and not np.allclose(laplacian @ np.ones(model.n), model.self_loops, rtol=0.0, atol=1e-12):
        report.violations.append("laplacian row sums differ from self-loops")
    off_diagonal = laplacian - np.diag(np.diag(laplacian))
    if np.any(off_diagonal > 0):
        report.violations.append("laplacian has positive off-diagonal entries")

    report.spectral_abscissa = spectral_abscissa(-laplacian)
    if not report.is_hurwitz:
        report.violations.append("-L is not Hurwitz")

    if report.violations:
        LOGGER.debug("Modelo invalido: %s", report.violations)
    return report
