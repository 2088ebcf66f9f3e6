from __future__ import annotations

from dataclasses import dataclass, field, replace
import logging
from typing import Dict, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.linalg import expm

from app.core.errors import GeneratorExhausted
from app.network.types import AttackScenario, MonitorSet, NetworkModel
from app.services.disruption import DisruptionResult

LOGGER = logging.getLogger(__name__)

ADMISSIBLE_SHRINK = 1.0 - 1e-9
MAX_REDRAWS = 100


@dataclass(frozen=True)
class DampedSinusoid:
    """amplitude * exp(-decay t) * cos(frequency t + phase)."""

    amplitude: float
    frequency: float
    decay: float
    phase: float = 0.0

    def scaled(self, factor: float) -> "DampedSinusoid":
        return replace(self, amplitude=self.amplitude * factor)


@dataclass(frozen=True)
class SimulationConfig:
    horizon: float
    dt: float
    attack_spec: Tuple[Tuple[DampedSinusoid, ...], ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.dt > self.horizon / 100.0:
            raise ValueError(f"dt={self.dt} must not exceed horizon/100={self.horizon / 100.0}")
        spec = tuple(tuple(channel) for channel in self.attack_spec)
        for channel in spec:
            for term in channel:
                if not term.decay > 0:
                    raise ValueError(f"every damped sinusoid needs decay > 0, got {term.decay}")
        object.__setattr__(self, "attack_spec", spec)

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def scaled(self, factor: float) -> "SimulationConfig":
        spec = tuple(tuple(term.scaled(factor) for term in channel) for channel in self.attack_spec)
        return replace(self, attack_spec=spec)


@dataclass
class TrajectoryReport:
    performance_energy: float
    monitor_energies: Dict[int, float]
    channel_energies: Dict[int, float]
    final_state_norm: float
    times: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    states: np.ndarray = field(repr=False, default_factory=lambda: np.zeros((0, 0)))
    inputs: np.ndarray = field(repr=False, default_factory=lambda: np.zeros((0, 0)))


def _augmented_generator(
    model: NetworkModel,
    attack: AttackScenario,
    attack_spec: Sequence[Sequence[DampedSinusoid]],
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Network state followed by one (cos, sin) exosystem pair per sinusoid term.

    Returns the generator, the initial augmented state and the output map from the
    augmented state to the attack channels.
    """
    n = model.n
    terms = [(channel, term) for channel, spec in enumerate(attack_spec) for term in spec]
    size = n + 2 * len(terms)
    generator = np.zeros((size, size))
    generator[:n, :n] = -model.laplacian
    initial = np.zeros(size)
    channel_map = np.zeros((attack.alpha, size))
    input_matrix = attack.input_matrix(n)

    for position, (channel, term) in enumerate(terms):
        c, s = n + 2 * position, n + 2 * position + 1
        generator[c, c] = generator[s, s] = -term.decay
        generator[c, s] = -term.frequency
        generator[s, c] = term.frequency
        initial[c] = term.amplitude * np.cos(term.phase)
        initial[s] = term.amplitude * np.sin(term.phase)
        channel_map[channel, c] = 1.0
        generator[:n, c] += input_matrix[:, channel]
    return generator, initial, channel_map


def simulate(
    model: NetworkModel,
    attack: AttackScenario,
    config: SimulationConfig,
    monitors: MonitorSet | None = None,
) -> TrajectoryReport:
    """x' = -L x + B zeta(t), x(0) = 0, advanced by the exact one-step transition of the augmented system."""
    monitors = monitors or MonitorSet.empty()
    attack.check_against(model.n)
    monitors.check_against(model.n)
    spec = config.attack_spec or tuple(() for _ in attack.nodes)
    if len(spec) != attack.alpha:
        raise ValueError(f"attack_spec has {len(spec)} channels for {attack.alpha} attack nodes")

    n = model.n
    generator, state, channel_map = _augmented_generator(model, attack, spec)
    transition = expm(generator * config.dt)
    steps = config.steps
    trajectory = np.empty((steps + 1, state.shape[0]))
    trajectory[0] = state
    for step in range(steps):
        state = transition @ state
        trajectory[step + 1] = state

    times = np.arange(steps + 1) * config.dt
    states = trajectory[:, :n]
    inputs = trajectory @ channel_map.T

    performance = trapezoid((states * model.weights) ** 2, times, axis=0).sum()
    monitor_energies = {node: float(trapezoid(states[:, node] ** 2, times)) for node in monitors.nodes}
    channel_energies = {
        node: float(trapezoid(inputs[:, column] ** 2, times)) for column, node in enumerate(attack.nodes)
    }
    return TrajectoryReport(
        performance_energy=float(performance),
        monitor_energies=monitor_energies,
        channel_energies=channel_energies,
        final_state_norm=float(np.linalg.norm(states[-1])),
        times=times,
        states=states,
        inputs=inputs,
    )


def _draw_spec(rng: np.random.Generator, channels: int, terms: int) -> Tuple[Tuple[DampedSinusoid, ...], ...]:
    return tuple(
        tuple(
            DampedSinusoid(
                amplitude=float(rng.uniform(0.1, 1.0)),
                frequency=float(rng.uniform(0.0, 3.0)),
                decay=float(rng.uniform(0.2, 2.0)),
                phase=float(rng.uniform(0.0, 2.0 * np.pi)),
            )
            for _ in range(terms)
        )
        for _ in range(channels)
    )


def generate_admissible_attack(
    model: NetworkModel,
    monitors: MonitorSet,
    attack: AttackScenario,
    seed: int,
    config: SimulationConfig,
    terms_per_channel: int = 2,
) -> SimulationConfig:
    """Random damped sinusoids rescaled onto the boundary of the stealthy, energy-bounded set.

    Energies scale with the square of the amplitude factor, so the largest admissible factor
    is the square root of the tightest constraint ratio.
    """
    rng = np.random.default_rng(seed)
    thresholds = model.thresholds
    energies = attack.channel_energy
    for _ in range(MAX_REDRAWS):
        draft = replace(config, attack_spec=_draw_spec(rng, attack.alpha, terms_per_channel), seed=seed)
        report = simulate(model, attack, draft, monitors)
        ratios = [
            energies[column] / report.channel_energies[node]
            for column, node in enumerate(attack.nodes)
            if report.channel_energies[node] > 0
        ]
        ratios += [
            thresholds[node] / report.monitor_energies[node]
            for node in monitors.nodes
            if report.monitor_energies[node] > 0
        ]
        if not ratios:
            continue
        factor = float(np.sqrt(min(ratios))) * ADMISSIBLE_SHRINK
        return draft.scaled(factor)
    raise GeneratorExhausted(f"no non-degenerate attack drawn after {MAX_REDRAWS} attempts (seed={seed})")


def dissipation_check(
    model: NetworkModel,
    attack: AttackScenario,
    monitors: MonitorSet,
    result: DisruptionResult,
    config: SimulationConfig,
) -> float:
    """Worst value over sample times of S(x(t)) - S(x(0)) - integral of the supply rate; <= 0 when dissipative.

    Supply rate: sum_m gamma_m y_m^2 + sum_j psi_j zeta_j^2 - |W x|^2, storage S(x) = x' P x.
    """
    certificate = np.asarray(result.certificate, dtype=float)
    if certificate.shape != (model.n, model.n):
        raise ValueError(f"certificate has shape {certificate.shape}, expected {(model.n, model.n)}")
    if set(result.gammas) != set(monitors.nodes) or set(result.psis) != set(attack.nodes):
        raise ValueError("result multipliers do not match the given monitors and attack nodes")

    report = simulate(model, attack, config, monitors)
    states, inputs, times = report.states, report.inputs, report.times
    gamma = np.zeros(model.n)
    for node in monitors.nodes:
        gamma[node] = result.gammas[node]
    psi = np.array([result.psis[node] for node in attack.nodes], dtype=float)

    supply = (states**2) @ (gamma - model.weights**2) + (inputs**2) @ psi
    supplied = cumulative_trapezoid(supply, times, initial=0.0)
    storage = np.einsum("ti,ij,tj->t", states, certificate, states)
    residual = storage - storage[0] - supplied
    worst = float(np.max(residual))
    LOGGER.debug("Residuo de dissipacao: %.3e", worst)
    return worst
