from __future__ import annotations

from dataclasses import dataclass
import logging
import time
from typing import Any, Dict, List, Sequence

import numpy as np
import pandas as pd

from app.core.errors import SolverFailure
from app.core.performance_profiler import PerformanceProfiler, set_active_profiler
from app.network.generator import generate_erdos_renyi
from app.network.types import AttackScenario, MonitorSet, NodeDefaults, ThreatModel
from app.sdp.solver import SolverTolerances, solve
from app.services.allocation import assemble_misdp, optimal_allocation_enumerate, optimal_allocation_misdp
from app.services.disruption import CertificateMode, multiplier_bound, worst_case_disruption
from app.services.scalable import tune_self_loops

LOGGER = logging.getLogger(__name__)

FIG1_COLUMNS = (
    "graph_id",
    "enumerate_cost",
    "misdp_cost",
    "relative_deviation_pct",
    "enumerate_monitors",
    "misdp_monitors",
    "certified",
    "bnb_nodes",
    "big_m",
)

BENCH_COLUMNS = (
    "n",
    "value_full",
    "value_diag",
    "time_full",
    "time_diag",
    "relative_gap",
    "speedup",
    "eta",
    "monitors",
    "attack",
    "relax_time_full",
    "relax_time_diag",
)


def default_threat() -> ThreatModel:
    return ThreatModel.from_pairs([(1, 0.5), (2, 0.35), (3, 0.15)], energy_bound=10.0)


def _label(nodes: Sequence[int]) -> str:
    return "-".join(str(node) for node in nodes)


def experiment_fig1(
    n_graphs: int = 20,
    n: int = 10,
    p: float = 0.25,
    defaults: NodeDefaults | None = None,
    seed: int = 0,
    *,
    budget: int = 3,
    threat: ThreatModel | None = None,
    big_m: float | None = None,
    jobs: int | None = None,
    max_draws: int = 10_000,
    tol: SolverTolerances | None = None,
) -> pd.DataFrame:
    """Branch-and-bound against exhaustive search on seeded random digraphs, one row per graph."""
    threat = threat or default_threat()
    seeds = np.random.SeedSequence(seed).spawn(n_graphs)
    rows: List[Dict[str, Any]] = []
    for graph_id, graph_seed in enumerate(seeds):
        model = generate_erdos_renyi(n, p, graph_seed, defaults, max_draws=max_draws)
        exhaustive = optimal_allocation_enumerate(model, threat, budget, jobs=jobs, tol=tol)
        bound = multiplier_bound(model, threat, surrogate=big_m, jobs=jobs, tol=tol)
        joint = optimal_allocation_misdp(model, threat, budget, bound, jobs=jobs, tol=tol)
        deviation = (joint.expected_cost - exhaustive.expected_cost) / exhaustive.expected_cost * 100.0
        LOGGER.info(
            "Grafo %s: enumeracao=%.9g bnb=%.9g desvio=%.3e%%",
            graph_id,
            exhaustive.expected_cost,
            joint.expected_cost,
            deviation,
        )
        rows.append(
            {
                "graph_id": graph_id,
                "enumerate_cost": exhaustive.expected_cost,
                "misdp_cost": joint.expected_cost,
                "relative_deviation_pct": deviation,
                "enumerate_monitors": _label(exhaustive.monitors.nodes),
                "misdp_monitors": _label(joint.monitors.nodes),
                "certified": joint.certified,
                "bnb_nodes": joint.node_count,
                "big_m": bound,
            }
        )
    return pd.DataFrame(rows, columns=list(FIG1_COLUMNS))


@dataclass
class _Timing:
    value: float
    seconds: float


def _timed_solves(run, reps: int, timeout: float | None, span: str, profiler: PerformanceProfiler) -> _Timing:
    """Repeat `run`; the first repetition is a warm-up and discarded when reps > 1. NaN on timeout or failure."""
    samples: List[float] = []
    value = float("nan")
    for rep in range(max(reps, 1)):
        started_at = time.perf_counter()
        try:
            value = run()
        except SolverFailure as exc:
            LOGGER.warning("Falha no benchmark (%s): %s", span, exc)
            return _Timing(float("nan"), float("nan"))
        elapsed = time.perf_counter() - started_at
        profiler.add_time(span, elapsed)
        if timeout is not None and elapsed > timeout:
            LOGGER.warning("Tempo limite excedido em %s (%.2fs > %.2fs)", span, elapsed, timeout)
            return _Timing(float("nan"), float("nan"))
        if rep > 0 or reps <= 1:
            samples.append(elapsed)
    return _Timing(value, float(np.median(samples)))


def benchmark_compare(
    sizes: Sequence[int],
    reps: int = 3,
    budget: int = 3,
    threat: ThreatModel | None = None,
    seed: int = 0,
    *,
    p: float = 0.25,
    defaults: NodeDefaults | None = None,
    timeout_seconds: float | None = None,
    sequential: bool = True,
    include_allocation: bool = False,
    max_draws: int = 10_000,
    eta0: float = 0.1,
    max_iters: int = 30,
    tol: SolverTolerances | None = None,
    profiler_path: str | None = None,
) -> pd.DataFrame:
    """Full versus diagonal certificates on tuned random networks of growing size.

    Each size uses its own spawned seed for the graph and for the random (monitors, attack) pair.
    """
    threat = threat or default_threat()
    jobs = 1 if sequential else None
    profiler = PerformanceProfiler()
    set_active_profiler(profiler)
    rows: List[Dict[str, Any]] = []
    try:
        for n, size_seed in zip(sizes, np.random.SeedSequence(seed).spawn(len(sizes))):
            graph_seed, pair_seed = size_seed.spawn(2)
            model = generate_erdos_renyi(n, p, graph_seed, defaults, max_draws=max_draws)
            # Small networks attack every node when the largest type does not fit.
            alpha = min(threat.largest_alpha, n)
            local_threat = ThreatModel.from_pairs([(alpha, 1.0)], threat.energy_bound)
            tuning = tune_self_loops(model, local_threat, eta0=eta0, max_iters=max_iters, jobs=jobs, tol=tol)
            tuned = tuning.model

            rng = np.random.default_rng(pair_seed)
            monitors = MonitorSet(tuple(rng.choice(n, size=min(budget, n), replace=False)))
            attack = AttackScenario(
                tuple(rng.choice(n, size=local_threat.largest_alpha, replace=False)), local_threat.energy_bound
            )

            full = _timed_solves(
                lambda: worst_case_disruption(tuned, monitors, attack, CertificateMode.FULL, tol=tol).value,
                reps, timeout_seconds, "bench:full", profiler,
            )
            diag = _timed_solves(
                lambda: worst_case_disruption(
                    tuned, monitors, attack, CertificateMode.DIAGONAL, certified=tuning.certificate.holds, tol=tol
                ).value,
                reps, timeout_seconds, "bench:diagonal", profiler,
            )

            relax_full = relax_diag = float("nan")
            if include_allocation:
                big_m = tuning.certificate.max_v_infinity / tuning.certificate.delta_min
                relax_full = _relaxation_seconds(tuned, local_threat, budget, big_m, CertificateMode.FULL, tol)
                relax_diag = _relaxation_seconds(tuned, local_threat, budget, big_m, CertificateMode.DIAGONAL, tol)

            gap = abs(full.value - diag.value) / abs(full.value) if full.value else float("nan")
            rows.append(
                {
                    "n": n,
                    "value_full": full.value,
                    "value_diag": diag.value,
                    "time_full": full.seconds,
                    "time_diag": diag.seconds,
                    "relative_gap": gap,
                    "speedup": full.seconds / diag.seconds if diag.seconds else float("nan"),
                    "eta": tuning.eta,
                    "monitors": _label(monitors.nodes),
                    "attack": _label(attack.nodes),
                    "relax_time_full": relax_full,
                    "relax_time_diag": relax_diag,
                }
            )
            LOGGER.info(
                "Benchmark n=%s: full=%.3fs diag=%.3fs gap=%.2e", n, full.seconds, diag.seconds, gap
            )
    finally:
        set_active_profiler(None)
        if profiler_path:
            profiler.export_json(profiler_path)
    return pd.DataFrame(rows, columns=list(BENCH_COLUMNS))


def _relaxation_seconds(model, threat, budget, big_m, mode, tol) -> float:
    """Wall time of the root relaxation of the joint program."""
    layout = assemble_misdp(model, threat, budget, big_m, mode)
    solution = solve(layout.problem, tol, relax_binaries=True)
    if not solution.is_optimal:
        return float("nan")
    return solution.solve_seconds
