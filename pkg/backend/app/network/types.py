from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
import math
from typing import Iterator, Sequence, Tuple

import numpy as np


def _frozen_array(values: object, name: str, ndim: int) -> np.ndarray:
    array = np.array(values, dtype=float)
    if array.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {array.shape}")
    array.setflags(write=False)
    return array


def _node_tuple(nodes: Sequence[int], name: str) -> Tuple[int, ...]:
    values = tuple(sorted(int(node) for node in nodes))
    if len(set(values)) != len(values):
        raise ValueError(f"{name} contains repeated node indices: {list(nodes)}")
    if values and values[0] < 0:
        raise ValueError(f"{name} contains negative node indices: {list(nodes)}")
    return values


@dataclass(frozen=True)
class NodeDefaults:
    """Per-node parameters used when a model is generated instead of loaded."""

    self_loop: float = 0.7
    weight: float = 1.0
    threshold: float = 0.5
    sensor_cost: float = 0.3


@dataclass(frozen=True, eq=False)
class NetworkModel:
    adjacency: np.ndarray
    self_loops: np.ndarray
    weights: np.ndarray
    thresholds: np.ndarray
    sensor_costs: np.ndarray

    def __post_init__(self) -> None:
        adjacency = _frozen_array(self.adjacency, "adjacency", 2)
        if adjacency.shape[0] != adjacency.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {adjacency.shape}")
        object.__setattr__(self, "adjacency", adjacency)
        n = adjacency.shape[0]
        for name in ("self_loops", "weights", "thresholds", "sensor_costs"):
            vector = _frozen_array(getattr(self, name), name, 1)
            if vector.shape[0] != n:
                raise ValueError(f"{name} has {vector.shape[0]} entries, expected {n}")
            object.__setattr__(self, name, vector)

    @classmethod
    def from_adjacency(
        cls,
        adjacency: Sequence[Sequence[float]] | np.ndarray,
        defaults: NodeDefaults | None = None,
    ) -> "NetworkModel":
        defaults = defaults or NodeDefaults()
        n = np.asarray(adjacency).shape[0]
        return cls(
            adjacency=adjacency,
            self_loops=np.full(n, defaults.self_loop),
            weights=np.full(n, defaults.weight),
            thresholds=np.full(n, defaults.threshold),
            sensor_costs=np.full(n, defaults.sensor_cost),
        )

    @property
    def n(self) -> int:
        return int(self.adjacency.shape[0])

    @cached_property
    def laplacian(self) -> np.ndarray:
        """L = diag(theta) + diag(A 1) - A, computed without validating the inputs."""
        value = np.diag(self.self_loops + self.adjacency.sum(axis=1)) - self.adjacency
        value.setflags(write=False)
        return value

    def with_self_loops(self, self_loops: Sequence[float] | np.ndarray) -> "NetworkModel":
        return NetworkModel(
            adjacency=self.adjacency,
            self_loops=np.array(self_loops, dtype=float),
            weights=self.weights,
            thresholds=self.thresholds,
            sensor_costs=self.sensor_costs,
        )


@dataclass(frozen=True)
class MonitorSet:
    nodes: Tuple[int, ...] = ()
    budget: int | None = None

    def __post_init__(self) -> None:
        nodes = _node_tuple(self.nodes, "monitor set")
        object.__setattr__(self, "nodes", nodes)
        budget = len(nodes) if self.budget is None else int(self.budget)
        if budget < 0:
            raise ValueError(f"monitor budget must be non-negative, got {budget}")
        if len(nodes) > budget:
            raise ValueError(f"monitor set {list(nodes)} exceeds budget {budget}")
        object.__setattr__(self, "budget", budget)

    @classmethod
    def empty(cls, budget: int = 0) -> "MonitorSet":
        return cls((), budget)

    @classmethod
    def from_indicator(cls, z: Sequence[float] | np.ndarray, budget: int | None = None) -> "MonitorSet":
        nodes = tuple(int(index) for index, value in enumerate(np.asarray(z)) if round(float(value)) == 1)
        return cls(nodes, budget)

    def indicator(self, n: int) -> np.ndarray:
        self.check_against(n)
        z = np.zeros(n, dtype=int)
        z[list(self.nodes)] = 1
        return z

    def check_against(self, n: int) -> None:
        if self.nodes and self.nodes[-1] >= n:
            raise ValueError(f"monitor node {self.nodes[-1]} is outside [0, {n})")

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class AttackScenario:
    nodes: Tuple[int, ...]
    energy_bound: float
    channel_bounds: Tuple[float, ...] | None = field(default=None)

    def __post_init__(self) -> None:
        nodes = _node_tuple(self.nodes, "attack set")
        if not nodes:
            raise ValueError("attack set must contain at least one node")
        object.__setattr__(self, "nodes", nodes)
        energy = float(self.energy_bound)
        if not energy > 0:
            raise ValueError(f"energy_bound must be positive, got {energy}")
        object.__setattr__(self, "energy_bound", energy)
        if self.channel_bounds is not None:
            bounds = tuple(float(value) for value in self.channel_bounds)
            if len(bounds) != len(nodes):
                raise ValueError(f"channel_bounds has {len(bounds)} entries for {len(nodes)} attack nodes")
            if any(not value > 0 for value in bounds):
                raise ValueError(f"channel_bounds must be positive, got {list(bounds)}")
            object.__setattr__(self, "channel_bounds", bounds)

    @property
    def alpha(self) -> int:
        return len(self.nodes)

    @property
    def channel_energy(self) -> np.ndarray:
        if self.channel_bounds is None:
            return np.full(self.alpha, self.energy_bound)
        return np.array(self.channel_bounds, dtype=float)

    def input_matrix(self, n: int) -> np.ndarray:
        """B with one canonical selector column per attacked node."""
        self.check_against(n)
        matrix = np.zeros((n, self.alpha))
        matrix[list(self.nodes), np.arange(self.alpha)] = 1.0
        return matrix

    def check_against(self, n: int) -> None:
        if self.nodes[-1] >= n:
            raise ValueError(f"attack node {self.nodes[-1]} is outside [0, {n})")

    def label(self) -> str:
        return "-".join(str(node) for node in self.nodes)


@dataclass(frozen=True)
class AttackType:
    alpha: int
    probability: float


@dataclass(frozen=True)
class ThreatModel:
    types: Tuple[AttackType, ...]
    energy_bound: float

    def __post_init__(self) -> None:
        types = tuple(sorted(self.types, key=lambda item: item.alpha))
        object.__setattr__(self, "types", types)
        if not types:
            raise ValueError("threat model needs at least one attack type")
        if not float(self.energy_bound) > 0:
            raise ValueError(f"energy_bound must be positive, got {self.energy_bound}")
        alphas = [item.alpha for item in types]
        if len(set(alphas)) != len(alphas):
            raise ValueError(f"attack type sizes must be distinct, got {alphas}")
        if any(alpha <= 0 for alpha in alphas):
            raise ValueError(f"attack type sizes must be positive, got {alphas}")
        probabilities = [float(item.probability) for item in types]
        if any(prob < 0 or prob > 1 for prob in probabilities):
            raise ValueError(f"attack type probabilities must lie in [0, 1], got {probabilities}")
        if abs(math.fsum(probabilities) - 1.0) > 1e-12:
            raise ValueError(f"attack type probabilities must sum to 1, got {math.fsum(probabilities)!r}")
        for smaller, larger in zip(types, types[1:]):
            if not larger.probability < smaller.probability:
                raise ValueError(
                    "larger attack types must be strictly less likely: "
                    f"alpha={larger.alpha} has probability {larger.probability} "
                    f">= {smaller.probability} of alpha={smaller.alpha}"
                )

    @classmethod
    def from_pairs(cls, pairs: Sequence[Tuple[int, float]], energy_bound: float) -> "ThreatModel":
        return cls(tuple(AttackType(int(alpha), float(prob)) for alpha, prob in pairs), float(energy_bound))

    @property
    def largest_alpha(self) -> int:
        return self.types[-1].alpha

    def check_against(self, n: int) -> None:
        if self.largest_alpha > n:
            raise ValueError(f"attack type size {self.largest_alpha} exceeds the {n} network nodes")

    def attack_sets(self, alpha: int, n: int) -> Iterator[AttackScenario]:
        """All alpha-node attack sets in lexicographic order."""
        for nodes in combinations(range(n), alpha):
            yield AttackScenario(nodes, self.energy_bound)

    def attack_set_count(self, n: int) -> int:
        return sum(math.comb(n, item.alpha) for item in self.types)
