from __future__ import annotations

import shutil
import sys
import unittest
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "backend"))

from app.core.parallel import resolve_jobs, run_parallel
from app.core.performance_profiler import PerformanceProfiler, set_active_profiler
from app.network.types import AttackScenario, MonitorSet, NetworkModel
from app.sdp.debug_dump import dump_problem, write_problem_dump
from app.sdp.oracle import OracleGrid, dual_grid_oracle
from app.sdp.problem import LmiConstraint, ScalarTerm, SdpProblem, selector
from app.sdp.solver import SolveStatus, SolverTolerances, check_lmi_feasibility, solve
from app.services.disruption import CertificateMode, build_disruption_problem


def _single_node() -> NetworkModel:
    return NetworkModel.from_adjacency([[0.0]])


def _scalar_problem(constant: np.ndarray, name: str = "t") -> SdpProblem:
    size = constant.shape[0]
    problem = SdpProblem(name="scalar")
    problem.add_scalar(name)
    problem.add_objective(name, 1.0)
    problem.add_lmi(LmiConstraint("block", constant, [ScalarTerm(name, -np.eye(size))]))
    return problem


class SolveTests(unittest.TestCase):
    def test_nonnegative_scalar_reaches_zero(self) -> None:
        solution = solve(_scalar_problem(np.zeros((1, 1))))
        self.assertIs(solution.status, SolveStatus.OPTIMAL)
        self.assertAlmostEqual(solution.objective_value, 0.0, places=6)

    def test_eigenvalue_forcing(self) -> None:
        solution = solve(_scalar_problem(np.diag([1.0, 2.0])))
        self.assertTrue(solution.is_optimal)
        self.assertAlmostEqual(solution.values["t"], 2.0, places=6)
        self.assertLessEqual(solution.max_lmi_violation, 1e-7 * 2.0)

    def test_large_constant_block_meets_absolute_tolerance(self) -> None:
        tol = SolverTolerances()
        solution = solve(_scalar_problem(np.diag([1e2, 2.0])), tol)
        self.assertIs(solution.status, SolveStatus.OPTIMAL)
        self.assertLessEqual(solution.max_lmi_violation, tol.feasibility)
        self.assertAlmostEqual(solution.values["t"], 1e2, delta=1e-5)

    def test_optimal_status_never_hides_absolute_violation(self) -> None:
        tol = SolverTolerances()
        for constant in (1e4, 1e6):
            with self.subTest(constant=constant):
                solution = solve(_scalar_problem(np.diag([constant, 2.0])), tol)
                self.assertIn(solution.status, (SolveStatus.OPTIMAL, SolveStatus.NUMERICAL_FAILURE))
                if solution.is_optimal:
                    self.assertLessEqual(solution.max_lmi_violation, tol.feasibility)
                else:
                    self.assertFalse(solution.max_lmi_violation <= tol.feasibility)

    def test_infeasible_status_is_passed_through(self) -> None:
        problem = SdpProblem(name="infeasible")
        problem.add_scalar("t")
        problem.add_objective("t", 1.0)
        problem.add_lmi(LmiConstraint("block", np.ones((1, 1)), [ScalarTerm("t", np.ones((1, 1)))]))
        self.assertIs(solve(problem).status, SolveStatus.INFEASIBLE)

    def test_single_node_disruption_program(self) -> None:
        attack = AttackScenario((0,), 10.0)
        problem = build_disruption_problem(_single_node(), MonitorSet((0,)), attack)
        solution = solve(problem, SolverTolerances())
        self.assertTrue(solution.is_optimal)
        self.assertAlmostEqual(solution.objective_value, 0.5, delta=1e-6)
        lmi = problem.lmi_constraints[0].evaluate(solution.values)
        self.assertTrue(check_lmi_feasibility(lmi, 1e-6))

    def test_binary_variables_need_relaxation(self) -> None:
        problem = _scalar_problem(np.zeros((1, 1)))
        problem.add_scalar("z", binary=True)
        with self.assertRaises(ValueError):
            solve(problem)
        solution = solve(problem, relax_binaries=True)
        self.assertTrue(solution.is_optimal)
        self.assertGreaterEqual(solution.values["z"], -1e-7)
        self.assertLessEqual(solution.values["z"], 1.0 + 1e-7)

    def test_solve_records_profiler_span(self) -> None:
        profiler = PerformanceProfiler()
        set_active_profiler(profiler)
        try:
            solve(_scalar_problem(np.diag([1.0, 2.0])))
        finally:
            set_active_profiler(None)
        self.assertEqual(profiler.get_summary()["spans"]["sdp:solve"]["calls"], 1)
        self.assertGreater(profiler.get_summary()["spans"]["sdp:solve"]["total_seconds"], 0.0)


class ProblemTests(unittest.TestCase):
    def test_validate_rejects_undeclared_variable(self) -> None:
        problem = SdpProblem()
        problem.add_objective("missing", 1.0)
        with self.assertRaisesRegex(ValueError, "undeclared"):
            problem.validate()

    def test_validate_rejects_asymmetric_constant(self) -> None:
        problem = SdpProblem()
        problem.add_lmi(LmiConstraint("block", np.array([[0.0, 1.0], [0.0, 0.0]])))
        with self.assertRaisesRegex(ValueError, "not symmetric"):
            problem.validate()

    def test_duplicate_declaration_is_rejected(self) -> None:
        problem = SdpProblem()
        problem.add_scalar("x")
        with self.assertRaises(ValueError):
            problem.add_matrix("x", 2)

    def test_restricted_copy_tightens_bounds_only(self) -> None:
        problem = SdpProblem()
        problem.add_scalar("z", binary=True)
        restricted = problem.restricted({"z": (1.0, 1.0)})
        self.assertEqual(restricted.scalar_vars["z"].lower, 1.0)
        self.assertEqual(problem.scalar_vars["z"].lower, 0.0)
        self.assertTrue(restricted.scalar_vars["z"].binary)
        with self.assertRaises(KeyError):
            problem.restricted({"y": (0.0, 1.0)})

    def test_variable_count(self) -> None:
        problem = SdpProblem()
        problem.add_scalar("a")
        problem.add_matrix("P", 3)
        problem.add_matrix("D", 3, diagonal=True)
        self.assertEqual(problem.variable_count(), 1 + 6 + 3)


class LmiFeasibilityTests(unittest.TestCase):
    def test_examples(self) -> None:
        self.assertTrue(check_lmi_feasibility(-np.eye(3), 0.0))
        self.assertFalse(check_lmi_feasibility(np.diag([1e-5, -1.0]), 1e-6))
        self.assertTrue(check_lmi_feasibility(np.zeros((2, 2)), 0.0))

    def test_rejects_asymmetric_matrix(self) -> None:
        with self.assertRaises(ValueError):
            check_lmi_feasibility(np.array([[0.0, 1.0], [0.0, 0.0]]), 0.0)


class DebugDumpTests(unittest.TestCase):
    def setUp(self) -> None:
        self.output_dir = Path.cwd() / "tests" / "_tmp_sdp_backend"
        if self.output_dir.exists():
            shutil.rmtree(self.output_dir, ignore_errors=True)

    def tearDown(self) -> None:
        shutil.rmtree(self.output_dir, ignore_errors=True)

    def test_dump_lists_blocks_and_entries(self) -> None:
        problem = build_disruption_problem(
            _single_node(), MonitorSet((0,)), AttackScenario((0,), 10.0), CertificateMode.DIAGONAL
        )
        lines = dump_problem(problem).splitlines()
        self.assertTrue(lines[0].startswith("SDP disruption"))
        self.assertIn("SCALAR gamma_0 0 inf strict", lines)
        self.assertIn("MATRIX P 1 diagonal", lines)
        self.assertIn("OBJECTIVE 0 gamma_0 0.5 psi_0 10", lines)
        self.assertIn("LMI dissipation size 2", lines)
        self.assertIn("0 0 CONST 1", lines)
        self.assertIn("0 0 gamma_0 -1", lines)
        self.assertIn("1 1 psi_0 -1", lines)
        self.assertIn("0 0 P[0,0] -1.3999999999999999", lines)
        self.assertIn("0 1 P[0,0] 1", lines)

        path = write_problem_dump(problem, self.output_dir / "problem.txt")
        self.assertEqual(path.read_text(encoding="utf-8"), "\n".join(lines) + "\n")

    def test_selector_block(self) -> None:
        np.testing.assert_array_equal(selector(2, 1), [[0.0, 0.0], [0.0, 1.0]])


class OracleTests(unittest.TestCase):
    def test_monitored_single_node(self) -> None:
        model = _single_node()
        monitors, attack = MonitorSet((0,)), AttackScenario((0,), 10.0)
        result = dual_grid_oracle(model, monitors, attack, OracleGrid.default(model, monitors, attack, points=40))
        self.assertFalse(result.inconclusive)
        self.assertAlmostEqual(result.value, 0.5, delta=0.02 * 0.5)
        self.assertGreaterEqual(result.value, 0.5 - 1e-6)

    def test_unmonitored_single_node(self) -> None:
        model = _single_node()
        monitors, attack = MonitorSet.empty(), AttackScenario((0,), 10.0)
        result = dual_grid_oracle(model, monitors, attack, OracleGrid.default(model, monitors, attack, points=60))
        expected = 10.0 / 0.7**2
        self.assertAlmostEqual(result.value, expected, delta=0.02 * expected)
        self.assertGreaterEqual(result.value, expected - 1e-6)

    def test_default_grid_spans(self) -> None:
        model = NetworkModel.from_adjacency([[0.0, 1.0], [1.0, 0.0]])
        monitors, attack = MonitorSet((0,)), AttackScenario((0, 1), 10.0)
        grid = OracleGrid.default(model, monitors, attack)
        self.assertEqual((len(grid.gamma_grids), len(grid.psi_grids)), (1, 2))
        delta_min = float(np.min(model.thresholds))
        gamma, psi = grid.gamma_grids[0], grid.psi_grids[0]
        self.assertEqual(gamma.size, 100)
        self.assertAlmostEqual(gamma[0], 1e-4 * 10.0 / delta_min, delta=1e-12)
        self.assertAlmostEqual(gamma[-1] / (1e4 * 10.0 / delta_min), 1.0, places=9)
        self.assertAlmostEqual(psi[0], 1e-4 / delta_min, delta=1e-12)
        self.assertAlmostEqual(psi[-1] / (1e4 / delta_min), 1.0, places=9)

    def test_tiny_grid_is_inconclusive(self) -> None:
        model = _single_node()
        monitors, attack = MonitorSet((0,)), AttackScenario((0,), 10.0)
        result = dual_grid_oracle(model, monitors, attack, OracleGrid.constant(monitors, attack, 1e-12))
        self.assertTrue(result.inconclusive)
        self.assertEqual(result.value, float("inf"))

    def test_refinement_never_increases_value(self) -> None:
        model = NetworkModel.from_adjacency([[0.0, 1.0], [1.0, 0.0]])
        monitors, attack = MonitorSet.empty(), AttackScenario((1,), 10.0)
        coarse = dual_grid_oracle(
            model, monitors, attack, OracleGrid.default(model, monitors, attack, points=30, refinements=0)
        )
        refined = dual_grid_oracle(
            model, monitors, attack, OracleGrid.default(model, monitors, attack, points=30, refinements=2)
        )
        self.assertLessEqual(refined.value, coarse.value)

    def test_oracle_bounds_the_solver_from_above(self) -> None:
        model = NetworkModel.from_adjacency([[0.0, 1.0], [1.0, 0.0]])
        monitors, attack = MonitorSet((0,)), AttackScenario((1,), 10.0)
        exact = solve(build_disruption_problem(model, monitors, attack)).objective_value
        result = dual_grid_oracle(model, monitors, attack, OracleGrid.default(model, monitors, attack, points=60))
        self.assertGreaterEqual(result.value, exact - 1e-6)
        self.assertLessEqual(result.value, exact * 1.02)

    def test_rejects_non_positive_grid(self) -> None:
        model = _single_node()
        monitors, attack = MonitorSet((0,)), AttackScenario((0,), 10.0)
        with self.assertRaises(ValueError):
            dual_grid_oracle(model, monitors, attack, OracleGrid.constant(monitors, attack, 0.0))


class ParallelTests(unittest.TestCase):
    def test_results_keep_input_order(self) -> None:
        self.assertEqual(run_parallel(lambda value: value * value, range(8), jobs=4), [v * v for v in range(8)])

    def test_zero_jobs_means_every_core(self) -> None:
        self.assertGreaterEqual(resolve_jobs(0), 1)
        self.assertEqual(resolve_jobs(3), 3)


if __name__ == "__main__":
    unittest.main()
