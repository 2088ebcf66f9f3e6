from __future__ import annotations

import logging

import numpy as np

from app.core.errors import GeneratorExhausted
from app.network.laplacian import is_strongly_connected
from app.network.types import NetworkModel, NodeDefaults

LOGGER = logging.getLogger(__name__)


def _draw_adjacency(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    adjacency = (rng.random((n, n)) < p).astype(float)
    np.fill_diagonal(adjacency, 0.0)
    return adjacency


def generate_erdos_renyi(
    n: int,
    p: float,
    seed: int | np.random.SeedSequence,
    defaults: NodeDefaults | None = None,
    max_draws: int = 10_000,
) -> NetworkModel:
    """Directed G(n, p) with unit gains, redrawn from the same stream until strongly connected."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")

    rng = np.random.default_rng(seed)
    for draw in range(1, max_draws + 1):
        adjacency = _draw_adjacency(rng, n, p)
        if is_strongly_connected(adjacency):
            LOGGER.debug("Grafo fortemente conexo obtido na tentativa %s (n=%s, p=%s)", draw, n, p)
            return NetworkModel.from_adjacency(adjacency, defaults)

    raise GeneratorExhausted(
        f"no strongly connected digraph after {max_draws} draws (n={n}, p={p})"
    )
