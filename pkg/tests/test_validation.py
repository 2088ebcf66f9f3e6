from __future__ import annotations

from dataclasses import replace
import shutil
import sys
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pandas as pd

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "backend"))

from app.core.errors import METHOD_FAILURES, GeneratorExhausted
from app.network.generator import generate_erdos_renyi
from app.network.types import AttackScenario, MonitorSet, NetworkModel, ThreatModel
from app.services.disruption import worst_case_disruption
from app.validation.experiments import BENCH_COLUMNS, FIG1_COLUMNS, benchmark_compare, experiment_fig1
from app.validation.simulation import (
    DampedSinusoid,
    SimulationConfig,
    dissipation_check,
    generate_admissible_attack,
    simulate,
)

SINGLE_TYPE = ThreatModel.from_pairs([(1, 1.0)], 10.0)
DECAYING_EXPONENTIAL = ((DampedSinusoid(amplitude=1.0, frequency=0.0, decay=1.0),),)


def _single_node() -> NetworkModel:
    return NetworkModel.from_adjacency([[0.0]])


def _directed_cycle() -> NetworkModel:
    return NetworkModel.from_adjacency([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


class SimulationConfigTests(unittest.TestCase):
    def test_rejects_coarse_step(self) -> None:
        with self.assertRaises(ValueError):
            SimulationConfig(horizon=1.0, dt=0.1)
        SimulationConfig(horizon=1.0, dt=0.01)

    def test_rejects_non_positive_values(self) -> None:
        with self.assertRaises(ValueError):
            SimulationConfig(horizon=0.0, dt=1e-3)
        with self.assertRaises(ValueError):
            SimulationConfig(horizon=1.0, dt=0.0)

    def test_rejects_non_decaying_terms(self) -> None:
        with self.assertRaises(ValueError):
            SimulationConfig(horizon=10.0, dt=1e-2, attack_spec=((DampedSinusoid(1.0, 1.0, 0.0),),))


class SimulationTests(unittest.TestCase):
    def test_zero_attack_stays_at_rest(self) -> None:
        report = simulate(_directed_cycle(), AttackScenario((0,), 10.0), SimulationConfig(10.0, 1e-2), MonitorSet((1,)))
        self.assertEqual(report.performance_energy, 0.0)
        self.assertEqual(report.monitor_energies, {1: 0.0})
        self.assertEqual(report.channel_energies, {0: 0.0})
        self.assertEqual(report.final_state_norm, 0.0)

    def test_single_node_matches_closed_form(self) -> None:
        config = SimulationConfig(horizon=40.0, dt=1e-3, attack_spec=DECAYING_EXPONENTIAL)
        report = simulate(_single_node(), AttackScenario((0,), 10.0), config, MonitorSet((0,)))
        state_energy = (1.0 / 1.4 - 2.0 / 1.7 + 1.0 / 2.0) / 0.09
        self.assertAlmostEqual(report.channel_energies[0], 0.5, delta=1e-6)
        self.assertAlmostEqual(report.performance_energy, state_energy, delta=1e-6)
        self.assertAlmostEqual(report.monitor_energies[0], state_energy, delta=1e-6)
        self.assertLess(report.final_state_norm, 1e-9)

        one_second = int(round(1.0 / config.dt))
        expected_state = (np.exp(-0.7) - np.exp(-1.0)) / 0.3
        self.assertAlmostEqual(float(report.states[one_second, 0]), expected_state, delta=1e-9)

    def test_amplitude_scaling_is_quadratic(self) -> None:
        model, attack = _directed_cycle(), AttackScenario((0, 2), 10.0)
        spec = (
            (DampedSinusoid(0.5, 1.0, 0.5, 0.3),),
            (DampedSinusoid(1.0, 2.0, 1.0), DampedSinusoid(0.2, 0.0, 0.4)),
        )
        config = SimulationConfig(horizon=20.0, dt=1e-2, attack_spec=spec)
        base = simulate(model, attack, config, MonitorSet((1,)))
        scaled = simulate(model, attack, config.scaled(3.0), MonitorSet((1,)))
        self.assertAlmostEqual(scaled.performance_energy, 9.0 * base.performance_energy, delta=1e-9)
        self.assertAlmostEqual(scaled.monitor_energies[1], 9.0 * base.monitor_energies[1], delta=1e-9)
        for node in attack.nodes:
            self.assertAlmostEqual(scaled.channel_energies[node], 9.0 * base.channel_energies[node], delta=1e-9)

    def test_halving_the_step_converges(self) -> None:
        attack = AttackScenario((0,), 10.0)
        exact = (1.0 / 1.4 - 2.0 / 1.7 + 1.0 / 2.0) / 0.09
        errors = []
        for dt in (0.04, 0.02, 0.01):
            report = simulate(_single_node(), attack, SimulationConfig(20.0, dt, DECAYING_EXPONENTIAL))
            errors.append(abs(report.performance_energy - exact))
        self.assertLess(abs(errors[1] - errors[2]), 4.0 * abs(errors[0] - errors[1]))

    def test_channel_count_must_match_attack(self) -> None:
        config = SimulationConfig(horizon=10.0, dt=1e-2, attack_spec=DECAYING_EXPONENTIAL)
        with self.assertRaises(ValueError):
            simulate(_directed_cycle(), AttackScenario((0, 1), 10.0), config)


class AdmissibleAttackTests(unittest.TestCase):
    def test_constraints_hold_with_one_binding(self) -> None:
        model = _directed_cycle()
        monitors, attack = MonitorSet((1,)), AttackScenario((0, 2), 10.0)
        for seed in range(5):
            config = generate_admissible_attack(model, monitors, attack, seed, SimulationConfig(20.0, 1e-2))
            report = simulate(model, attack, config, monitors)
            ratios = [report.channel_energies[node] / 10.0 for node in attack.nodes]
            ratios.append(report.monitor_energies[1] / model.thresholds[1])
            self.assertLessEqual(max(ratios), 1.0)
            self.assertGreater(max(ratios), 1.0 - 1e-6)
            self.assertEqual(config.seed, seed)

    def test_without_monitors_energy_binds(self) -> None:
        model = _directed_cycle()
        attack = AttackScenario((1,), 10.0)
        config = generate_admissible_attack(model, MonitorSet(), attack, 3, SimulationConfig(20.0, 1e-2))
        report = simulate(model, attack, config)
        self.assertAlmostEqual(report.channel_energies[1], 10.0, delta=1e-6)

    def test_degenerate_draws_are_a_method_failure(self) -> None:
        silent = ((DampedSinusoid(amplitude=0.0, frequency=1.0, decay=1.0),),)
        with patch("app.validation.simulation._draw_spec", return_value=silent) as draw:
            with self.assertRaises(GeneratorExhausted) as raised:
                generate_admissible_attack(
                    _directed_cycle(), MonitorSet((1,)), AttackScenario((0,), 10.0), 0, SimulationConfig(2.0, 2e-2)
                )
        self.assertIsInstance(raised.exception, METHOD_FAILURES)
        self.assertEqual(draw.call_count, 100)

    def test_performance_never_exceeds_worst_case(self) -> None:
        model = generate_erdos_renyi(5, 0.4, seed=1)
        monitors, attack = MonitorSet((0,)), AttackScenario((2, 3), 10.0)
        bound = worst_case_disruption(model, monitors, attack).value
        for seed in range(10):
            config = generate_admissible_attack(model, monitors, attack, seed, SimulationConfig(20.0, 1e-3))
            report = simulate(model, attack, config, monitors)
            self.assertLessEqual(report.performance_energy, bound + 1e-4)


class DissipationTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls.model = _directed_cycle()
        cls.monitors = MonitorSet((1,))
        cls.attack = AttackScenario((0,), 10.0)
        cls.result = worst_case_disruption(cls.model, cls.monitors, cls.attack)

    def test_zero_attack_has_zero_residual(self) -> None:
        residual = dissipation_check(self.model, self.attack, self.monitors, self.result, SimulationConfig(10.0, 1e-2))
        self.assertEqual(residual, 0.0)

    def test_random_admissible_attacks(self) -> None:
        for seed in range(10):
            config = generate_admissible_attack(
                self.model, self.monitors, self.attack, seed, SimulationConfig(20.0, 1e-3)
            )
            residual = dissipation_check(self.model, self.attack, self.monitors, self.result, config)
            self.assertLessEqual(residual, 1e-5)

    def test_zero_storage_keeps_supply_non_negative(self) -> None:
        weakened = replace(self.result, certificate=np.zeros((3, 3)))
        config = generate_admissible_attack(self.model, self.monitors, self.attack, 0, SimulationConfig(20.0, 1e-3))
        self.assertLessEqual(dissipation_check(self.model, self.attack, self.monitors, weakened, config), 1e-5)

    def test_mismatched_inputs(self) -> None:
        config = SimulationConfig(10.0, 1e-2)
        with self.assertRaises(ValueError):
            dissipation_check(self.model, self.attack, MonitorSet((2,)), self.result, config)
        with self.assertRaises(ValueError):
            dissipation_check(self.model, self.attack, self.monitors, replace(self.result, certificate=np.eye(2)), config)


class ExperimentTests(unittest.TestCase):
    def setUp(self) -> None:
        self.output_dir = Path.cwd() / "tests" / "_tmp_validation"
        if self.output_dir.exists():
            shutil.rmtree(self.output_dir, ignore_errors=True)

    def tearDown(self) -> None:
        shutil.rmtree(self.output_dir, ignore_errors=True)

    def test_single_graph_comparison_is_deterministic(self) -> None:
        kwargs = dict(n_graphs=1, n=3, p=0.5, seed=4, budget=1, threat=SINGLE_TYPE, jobs=1)
        first = experiment_fig1(**kwargs)
        second = experiment_fig1(**kwargs)
        self.assertEqual(list(first.columns), list(FIG1_COLUMNS))
        self.assertEqual(len(first), 1)
        self.assertLessEqual(abs(float(first.loc[0, "relative_deviation_pct"])), 1e-3)
        self.assertTrue(bool(first.loc[0, "certified"]))
        pd.testing.assert_frame_equal(first, second)

    def test_small_benchmark(self) -> None:
        profile = self.output_dir / "bench_profile.json"
        frame = benchmark_compare(
            [2, 4], reps=1, budget=1, threat=SINGLE_TYPE, seed=0, p=0.6, profiler_path=str(profile)
        )
        self.assertEqual(list(frame.columns), list(BENCH_COLUMNS))
        self.assertEqual(list(frame["n"]), [2, 4])
        self.assertTrue((frame["relative_gap"] <= 1e-4).all())
        self.assertTrue((frame["time_full"] > 0).all())
        self.assertTrue(profile.exists())


if __name__ == "__main__":
    unittest.main()
