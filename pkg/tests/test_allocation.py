from __future__ import annotations

import json
import sys
import unittest
from dataclasses import replace
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "backend"))

from app.core.errors import EnumerationCapExceeded
from app.network.types import MonitorSet, NetworkModel, ThreatModel
from app.output.json_writer import to_jsonable
from app.services.allocation import (
    BNB_COLUMNS,
    AllocationResult,
    assemble_misdp,
    optimal_allocation_enumerate,
    optimal_allocation_misdp,
)
from app.services.disruption import CertificateMode, defense_cost, max_v_infinity, multiplier_bound

SINGLE_TYPE = ThreatModel.from_pairs([(1, 1.0)], 10.0)
TWO_TYPES = ThreatModel.from_pairs([(1, 0.6), (2, 0.4)], 10.0)
NODE_STATUSES = {"pruned", "leaf", "unresolved", "integral", "branched", "unresolved-relaxation"}


def _single_node() -> NetworkModel:
    return NetworkModel.from_adjacency([[0.0]])


def _asymmetric_three_nodes() -> NetworkModel:
    return NetworkModel(
        adjacency=[[0.0, 1.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        self_loops=[0.7, 0.7, 0.7],
        weights=[1.0, 1.0, 1.0],
        thresholds=[0.5, 0.4, 0.6],
        sensor_costs=[0.3, 0.5, 0.2],
    )


def _relative_gap(first: float, second: float) -> float:
    return abs(first - second) / abs(second)


class AssemblyTests(unittest.TestCase):
    def test_single_node_structure(self) -> None:
        layout = assemble_misdp(_single_node(), SINGLE_TYPE, budget=1, big_m=40.82)
        problem = layout.problem
        self.assertEqual(problem.binary_variables(), ["z_0"])
        self.assertEqual(layout.q_names, {1: "Q_1"})
        self.assertEqual(len(problem.lmi_constraints), 1)
        self.assertEqual(len(layout.blocks), 1)
        self.assertEqual(
            sorted(row.name for row in problem.linear_constraints), ["budget", "epigraph[0]", "link[0,0]"]
        )
        problem.validate()

    def test_block_count_on_ten_nodes(self) -> None:
        model = NetworkModel.from_adjacency(np.ones((10, 10)) - np.eye(10))
        threat = ThreatModel.from_pairs([(1, 0.5), (2, 0.35), (3, 0.15)], 10.0)
        full = assemble_misdp(model, threat, budget=3, big_m=50.0)
        diagonal = assemble_misdp(model, threat, budget=3, big_m=50.0, mode=CertificateMode.DIAGONAL)
        self.assertEqual(len(full.problem.lmi_constraints), 175)
        self.assertEqual(full.problem.variable_count() - diagonal.problem.variable_count(), 175 * (55 - 10))

    def test_cap_and_input_checks(self) -> None:
        with self.assertRaises(EnumerationCapExceeded):
            assemble_misdp(_asymmetric_three_nodes(), TWO_TYPES, budget=2, big_m=10.0, cap=5)
        with self.assertRaises(ValueError):
            assemble_misdp(_single_node(), SINGLE_TYPE, budget=1, big_m=0.0)
        with self.assertRaises(ValueError):
            assemble_misdp(_single_node(), SINGLE_TYPE, budget=-1, big_m=1.0)


class EnumerationTests(unittest.TestCase):
    def test_single_node_prefers_monitoring(self) -> None:
        result = optimal_allocation_enumerate(_single_node(), SINGLE_TYPE, budget=1)
        np.testing.assert_array_equal(result.z, [1])
        self.assertAlmostEqual(result.expected_cost, 0.8, delta=1e-6)
        self.assertEqual(result.method, "enumerate")
        self.assertEqual([row["monitor_set"] for row in result.rows], ["", "0"])
        self.assertAlmostEqual(result.rows[0]["expected_cost"], 10.0 / 0.49, delta=1e-5)

    def test_zero_budget_forces_empty_set(self) -> None:
        model = _asymmetric_three_nodes()
        result = optimal_allocation_enumerate(model, TWO_TYPES, budget=0, jobs=1)
        self.assertEqual(result.monitors.nodes, ())
        expected = sum(
            item.probability * max_v_infinity(model, TWO_TYPES, [item.alpha], jobs=1).value
            for item in TWO_TYPES.types
        )
        self.assertAlmostEqual(result.expected_cost, expected, delta=1e-6 * expected)

    def test_cap_is_enforced(self) -> None:
        with self.assertRaises(EnumerationCapExceeded):
            optimal_allocation_enumerate(_asymmetric_three_nodes(), TWO_TYPES, budget=2, cap=3)

    def test_uniform_cost_shift_within_fixed_cardinality(self) -> None:
        model = _asymmetric_three_nodes()
        base = optimal_allocation_enumerate(model, SINGLE_TYPE, budget=1, jobs=1)
        self.assertEqual(len(base.monitors), 1)
        shifted_model = replace(model, sensor_costs=model.sensor_costs + 0.05)
        shifted = defense_cost(shifted_model, base.monitors, SINGLE_TYPE, jobs=1)
        self.assertAlmostEqual(shifted.expected_cost - base.expected_cost, 0.05, delta=1e-6)
        singletons = [
            defense_cost(shifted_model, MonitorSet((node,)), SINGLE_TYPE, jobs=1).expected_cost for node in range(3)
        ]
        self.assertEqual(base.monitors.nodes, (int(np.argmin(singletons)),))


class BranchAndBoundTests(unittest.TestCase):
    def test_single_node_matches_enumeration(self) -> None:
        big_m = multiplier_bound(_single_node(), SINGLE_TYPE)
        self.assertAlmostEqual(big_m, 2 * 10.0 / 0.49, delta=1e-4)
        result = optimal_allocation_misdp(_single_node(), SINGLE_TYPE, budget=1, big_m=big_m)
        np.testing.assert_array_equal(result.z, [1])
        self.assertAlmostEqual(result.expected_cost, 0.8, delta=1e-6)
        self.assertTrue(result.certified)
        self.assertEqual(result.method, "branch-and-bound")
        self.assertGreaterEqual(result.node_count, 1)

    def test_matches_enumeration_on_three_nodes(self) -> None:
        model = _asymmetric_three_nodes()
        exhaustive = optimal_allocation_enumerate(model, TWO_TYPES, budget=2, jobs=1)
        big_m = multiplier_bound(model, TWO_TYPES, jobs=1)
        joint = optimal_allocation_misdp(model, TWO_TYPES, budget=2, big_m=big_m, jobs=1)
        self.assertTrue(joint.certified)
        self.assertLessEqual(_relative_gap(joint.expected_cost, exhaustive.expected_cost), 1e-5)
        self.assertLessEqual(int(joint.z.sum()), 2)
        self.assertTrue(set(np.unique(joint.z)) <= {0, 1})

        finite_bound = 2 * float(np.max(model.sensor_costs)) + sum(
            item.probability * max_v_infinity(model, TWO_TYPES, [item.alpha], jobs=1).value
            for item in TWO_TYPES.types
        )
        self.assertLessEqual(joint.expected_cost, finite_bound + 1e-6)

        inflated = optimal_allocation_misdp(model, TWO_TYPES, budget=2, big_m=10.0 * big_m, jobs=1)
        self.assertEqual(inflated.monitors.nodes, joint.monitors.nodes)

    def test_node_log_is_consistent(self) -> None:
        model = _asymmetric_three_nodes()
        big_m = multiplier_bound(model, SINGLE_TYPE, jobs=1)
        result = optimal_allocation_misdp(model, SINGLE_TYPE, budget=1, big_m=big_m, jobs=1)
        self.assertTrue(result.rows)
        self.assertEqual(list(result.rows[0]), list(BNB_COLUMNS))
        bounds = {row["node_id"]: row["bound"] for row in result.rows}
        for row in result.rows:
            self.assertIn(row["status"], NODE_STATUSES)
            parent = row["parent_id"]
            if row["status"] == "branched" and parent in bounds:
                self.assertGreaterEqual(row["bound"], bounds[parent] - 1e-7 * max(1.0, abs(bounds[parent])))


class ResultRoundTripTests(unittest.TestCase):
    def test_json_round_trip_verifies(self) -> None:
        model = _asymmetric_three_nodes()
        big_m = multiplier_bound(model, SINGLE_TYPE, jobs=1)
        result = optimal_allocation_misdp(model, SINGLE_TYPE, budget=1, big_m=big_m, jobs=1)
        payload = json.loads(json.dumps(to_jsonable(result.to_payload())))
        reloaded = AllocationResult.from_payload(payload)
        self.assertEqual(reloaded.monitors, result.monitors)
        self.assertEqual(reloaded.verify(model, SINGLE_TYPE, budget=1), [])

    def test_tampered_result_is_reported(self) -> None:
        model = _asymmetric_three_nodes()
        result = optimal_allocation_enumerate(model, SINGLE_TYPE, budget=1, jobs=1)
        payload = json.loads(json.dumps(to_jsonable(result.to_payload())))
        payload["expected_cost"] += 1.0
        violations = AllocationResult.from_payload(payload).verify(model, SINGLE_TYPE, budget=1)
        self.assertTrue(any("expected cost" in item for item in violations))
        self.assertTrue(any("exceeds budget" in item for item in result.verify(model, SINGLE_TYPE, budget=0)))

    def test_indicator_must_match_monitor_set(self) -> None:
        model = _asymmetric_three_nodes()
        result = optimal_allocation_enumerate(model, SINGLE_TYPE, budget=1, jobs=1)
        np.testing.assert_array_equal(result.z, result.monitors.indicator(model.n))
        payload = json.loads(json.dumps(to_jsonable(result.to_payload())))
        payload["z"] = [1 - value for value in payload["z"]]
        violations = AllocationResult.from_payload(payload).verify(model, SINGLE_TYPE, budget=3)
        self.assertTrue(any("does not match the monitor set" in item for item in violations))


if __name__ == "__main__":
    unittest.main()
