from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import cached_property
import json
import logging
from pathlib import Path
from typing import Any, Callable, Dict, List

import cvxpy as cp
import numpy as np
import pandas as pd
import scipy

from app.cli.run_config import RunConfig
from app.config import get_settings
from app.core.errors import METHOD_FAILURES, ConfigError
from app.network.generator import generate_erdos_renyi
from app.network.laplacian import validate_network
from app.network.storage import export_laplacian_csv, load_network, network_to_payload, save_network
from app.network.types import AttackScenario, MonitorSet, NetworkModel, ThreatModel
from app.output.csv_writer import ensure_output_dir, write_dataframe
from app.output.json_writer import to_jsonable, write_json
from app.sdp.debug_dump import write_problem_dump
from app.sdp.solver import SolverTolerances, check_lmi_feasibility
from app.services.allocation import (
    BNB_COLUMNS,
    AllocationResult,
    optimal_allocation_enumerate,
    optimal_allocation_misdp,
)
from app.services.disruption import (
    CertificateMode,
    assemble_dissipation_lmi,
    build_disruption_problem,
    certificate_max_eigenvalue,
    multiplier_bound,
    worst_case_disruption,
    worst_case_over_attacks,
)
from app.services.scalable import check_scalability_condition, kyp_certificate_check, tune_self_loops
from app.validation.experiments import benchmark_compare, experiment_fig1
from app.validation.simulation import (
    SimulationConfig,
    dissipation_check,
    generate_admissible_attack,
    simulate,
)

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_METHOD_FAILURE = 1
EXIT_USAGE = 2

LMI_CHECK_TOLERANCE = 1e-6
PERFORMANCE_SLACK = 1e-4
DISSIPATION_SLACK = 1e-5
FIG1_DEVIATION_PCT = 1e-3


@dataclass
class CommandOutcome:
    payload: Dict[str, Any]
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    success: bool = True


@dataclass
class RunContext:
    command: str
    config: RunConfig

    @cached_property
    def output_dir(self) -> Path:
        return ensure_output_dir(self.config.resolved_output_dir())

    @cached_property
    def jobs(self) -> int:
        return self.config.resolved_jobs()

    @cached_property
    def tol(self) -> SolverTolerances:
        return self.config.solver_tolerances()

    @cached_property
    def threat(self) -> ThreatModel:
        return self.config.threat()

    @cached_property
    def mode(self) -> CertificateMode:
        return CertificateMode(self.config.mode)

    @cached_property
    def model(self) -> NetworkModel:
        config = self.config
        if config.network_file is not None:
            LOGGER.info("Carregando rede de %s", config.network_file)
            return load_network(config.network_file)
        spec = config.generator
        max_draws = spec.max_draws or get_settings().generator_max_draws
        LOGGER.info("Gerando rede Erdos-Renyi (n=%s, p=%s, seed=%s)", spec.n, spec.p, config.seed)
        return generate_erdos_renyi(spec.n, spec.p, config.seed, spec.node_defaults(), max_draws=max_draws)

    @cached_property
    def monitors(self) -> MonitorSet:
        monitors = MonitorSet(tuple(self.config.monitors))
        monitors.check_against(self.model.n)
        return monitors

    def attack(self) -> AttackScenario:
        if self.config.attack_nodes is None:
            raise ConfigError(f"required by the '{self.command}' command", "attack_nodes")
        attack = AttackScenario(tuple(self.config.attack_nodes), self.config.energy_bound)
        attack.check_against(self.model.n)
        return attack

    @cached_property
    def certified(self) -> bool:
        """Diagonal mode runs only on a model whose weighting condition holds."""
        if self.mode is not CertificateMode.DIAGONAL:
            return False
        certificate = check_scalability_condition(self.model, self.threat, jobs=self.jobs, tol=self.tol)
        return certificate.holds

    def simulation_config(self) -> SimulationConfig:
        spec = self.config.simulation
        return SimulationConfig(horizon=spec.horizon, dt=spec.dt, seed=self.config.seed)


CommandHandler = Callable[[RunContext], CommandOutcome]


@dataclass(frozen=True)
class CommandSpec:
    key: str
    description: str
    handler: CommandHandler


def _label(nodes) -> str:
    return "-".join(str(node) for node in nodes)


def _disruption_payload(model: NetworkModel, result) -> Dict[str, Any]:
    return {
        "value": result.value,
        "mode": result.mode,
        "solver_status": result.solver_status,
        "monitors": list(result.monitors.nodes),
        "attack": list(result.attack.nodes),
        "gammas": {str(node): value for node, value in result.gammas.items()},
        "psis": {str(node): value for node, value in result.psis.items()},
        "certificate": result.certificate,
        "certificate_max_eigenvalue": certificate_max_eigenvalue(model, result),
        "solve_seconds": result.solve_seconds,
    }


def _run_validate(context: RunContext) -> CommandOutcome:
    model = context.model
    report = validate_network(model)
    export_laplacian_csv(model, context.output_dir / "validate_laplacian.csv")
    if report.is_valid:
        LOGGER.info("Modelo valido (abscissa espectral de -L = %.6g)", report.spectral_abscissa)
    else:
        LOGGER.error("Modelo invalido: %s", "; ".join(report.violations))
    payload = {
        "valid": report.is_valid,
        "violations": report.violations,
        "spectral_abscissa": report.spectral_abscissa,
        "is_hurwitz": report.is_hurwitz,
        "network": network_to_payload(model),
    }
    return CommandOutcome(payload, success=report.is_valid)


def _run_assess(context: RunContext) -> CommandOutcome:
    model = context.model
    attack = context.attack()
    result = worst_case_disruption(
        model, context.monitors, attack, context.mode, certified=context.certified, tol=context.tol
    )
    LOGGER.info("V(%s, %s) = %.9g", list(context.monitors.nodes), list(attack.nodes), result.value)
    if context.config.dump_problem:
        problem = build_disruption_problem(model, context.monitors, attack, context.mode)
        dump_path = write_problem_dump(problem, context.output_dir / "assess_problem.txt")
        LOGGER.info("Problema SDP exportado em: %s", dump_path)
    table = pd.DataFrame([{"attack_set": _label(attack.nodes), "value": result.value}])
    return CommandOutcome(_disruption_payload(model, result), {"per_attack": table})


def _run_attack(context: RunContext) -> CommandOutcome:
    model = context.model
    threat = context.threat
    threat.check_against(model.n)
    types: List[Dict[str, Any]] = []
    rows: List[Dict[str, Any]] = []
    for attack_type in threat.types:
        worst = worst_case_over_attacks(
            model,
            context.monitors,
            attack_type.alpha,
            threat,
            context.mode,
            certified=context.certified,
            jobs=context.jobs,
            tol=context.tol,
        )
        LOGGER.info("Q(M|%s) = %.9g em %s", attack_type.alpha, worst.value, list(worst.argmax_attack.nodes))
        types.append(
            {
                "alpha": attack_type.alpha,
                "probability": attack_type.probability,
                "q": worst.value,
                "argmax": list(worst.argmax_attack.nodes),
            }
        )
        rows.extend(
            {"alpha": attack_type.alpha, "attack_set": _label(nodes), "value": value}
            for nodes, value in worst.per_attack_values.items()
        )
    payload = {"monitors": list(context.monitors.nodes), "mode": context.mode, "types": types}
    return CommandOutcome(payload, {"per_attack": pd.DataFrame(rows, columns=["alpha", "attack_set", "value"])})


def _run_allocate(context: RunContext) -> CommandOutcome:
    model = context.model
    config = context.config
    threat = context.threat
    common = dict(certified=context.certified, jobs=context.jobs, tol=context.tol)

    if config.method == "enumerate":
        result = optimal_allocation_enumerate(model, threat, config.budget, context.mode, **common)
        table = pd.DataFrame(result.rows)
    else:
        surrogate = None if config.big_m == "exact" else float(config.big_m)
        big_m = multiplier_bound(model, threat, context.mode, surrogate=surrogate, **common)
        result = optimal_allocation_misdp(model, threat, config.budget, big_m, context.mode, **common)
        table = pd.DataFrame(result.rows, columns=list(BNB_COLUMNS))

    payload = to_jsonable(result.to_payload())
    reloaded = AllocationResult.from_payload(json.loads(json.dumps(payload)))
    violations = reloaded.verify(model, threat, config.budget)
    if violations:
        LOGGER.error("Verificacao da alocacao falhou: %s", "; ".join(violations))
    if not result.certified:
        LOGGER.warning("Alocacao nao certificada")
    payload["verification"] = violations
    return CommandOutcome(payload, {config.method: table}, success=result.certified and not violations)


def _run_tune(context: RunContext) -> CommandOutcome:
    model = context.model
    spec = context.config.tuning
    result = tune_self_loops(
        model,
        context.threat,
        eta0=spec.eta0,
        max_iters=spec.max_iters,
        shrink_to_margin=spec.shrink,
        jobs=context.jobs,
        tol=context.tol,
    )
    tuned_path = save_network(result.model, context.output_dir / "tuned_network.json")
    payload = {
        "eta": result.eta,
        "self_loops_before": model.self_loops,
        "self_loops_after": result.model.self_loops,
        "certificate": result.certificate,
        "tuned_network": str(tuned_path),
    }
    return CommandOutcome(payload, {"history": pd.DataFrame(result.history)}, success=result.certificate.holds)


def _run_simulate(context: RunContext) -> CommandOutcome:
    model = context.model
    attack = context.attack()
    monitors = context.monitors
    spec = generate_admissible_attack(
        model,
        monitors,
        attack,
        context.config.seed,
        context.simulation_config(),
        terms_per_channel=context.config.simulation.terms_per_channel,
    )
    report = simulate(model, attack, spec, monitors)
    LOGGER.info("Energia de desempenho simulada: %.9g", report.performance_energy)

    trajectory = {"t": report.times}
    trajectory.update({f"x_{node}": report.states[:, node] for node in range(model.n)})
    trajectory.update({f"zeta_{node}": report.inputs[:, column] for column, node in enumerate(attack.nodes)})
    payload = {
        "monitors": list(monitors.nodes),
        "attack": list(attack.nodes),
        "performance_energy": report.performance_energy,
        "monitor_energies": {str(node): value for node, value in report.monitor_energies.items()},
        "channel_energies": {str(node): value for node, value in report.channel_energies.items()},
        "final_state_norm": report.final_state_norm,
        "attack_spec": spec.attack_spec,
    }
    return CommandOutcome(payload, {"trajectory": pd.DataFrame(trajectory)})


def _run_verify(context: RunContext) -> CommandOutcome:
    model = context.model
    attack = context.attack()
    monitors = context.monitors
    result = worst_case_disruption(model, monitors, attack, context.mode, certified=context.certified, tol=context.tol)

    lmi = assemble_dissipation_lmi(model, monitors, attack, result.gammas, result.psis, result.certificate)
    lmi_ok = check_lmi_feasibility(lmi, LMI_CHECK_TOLERANCE)
    kyp_ok = True
    if context.mode is CertificateMode.DIAGONAL:
        kyp_ok = kyp_certificate_check(model, attack, monitors, result.gammas, result.psis, result.certificate)

    spec = context.config.simulation
    base = context.simulation_config()
    seeds = np.random.SeedSequence(context.config.seed).generate_state(spec.samples)
    rows: List[Dict[str, Any]] = []
    for sample, seed in enumerate(int(value) for value in seeds):
        admissible = generate_admissible_attack(
            model, monitors, attack, seed, base, terms_per_channel=spec.terms_per_channel
        )
        report = simulate(model, attack, admissible, monitors)
        residual = dissipation_check(model, attack, monitors, result, admissible)
        passed = report.performance_energy <= result.value + PERFORMANCE_SLACK and residual <= DISSIPATION_SLACK
        rows.append(
            {
                "sample": sample,
                "seed": seed,
                "performance_energy": report.performance_energy,
                "bound": result.value,
                "dissipation_residual": residual,
                "passed": passed,
            }
        )
    failures = sum(1 for row in rows if not row["passed"])
    success = lmi_ok and kyp_ok and failures == 0
    LOGGER.info(
        "Verificacao: LMI=%s KYP=%s amostras reprovadas=%s/%s", lmi_ok, kyp_ok, failures, len(rows)
    )
    payload = _disruption_payload(model, result)
    payload.update({"lmi_feasible": lmi_ok, "kyp_certificate": kyp_ok, "samples": len(rows), "failures": failures})
    return CommandOutcome(payload, {"samples": pd.DataFrame(rows)}, success=success)


def _run_fig1(context: RunContext) -> CommandOutcome:
    config = context.config
    spec = config.fig1
    frame = experiment_fig1(
        n_graphs=spec.n_graphs,
        n=spec.n,
        p=spec.p,
        defaults=config.generator.node_defaults() if config.generator else None,
        seed=config.seed,
        budget=config.budget,
        threat=context.threat,
        big_m=None if config.big_m == "exact" else float(config.big_m),
        jobs=context.jobs,
        max_draws=get_settings().generator_max_draws,
        tol=context.tol,
    )
    worst = float(frame["relative_deviation_pct"].abs().max()) if len(frame) else 0.0
    success = worst <= FIG1_DEVIATION_PCT and bool(frame["certified"].all())
    payload = {"graphs": len(frame), "max_abs_deviation_pct": worst, "all_certified": bool(frame["certified"].all())}
    return CommandOutcome(payload, {"graphs": frame}, success=success)


def _run_bench(context: RunContext) -> CommandOutcome:
    config = context.config
    spec = config.bench
    profile_path = context.output_dir / "bench_profile.json"
    frame = benchmark_compare(
        spec.sizes,
        reps=spec.reps,
        budget=config.budget,
        threat=context.threat,
        seed=config.seed,
        p=config.generator.p if config.generator else config.fig1.p,
        defaults=config.generator.node_defaults() if config.generator else None,
        timeout_seconds=spec.timeout_seconds,
        sequential=spec.sequential,
        include_allocation=spec.include_allocation,
        max_draws=get_settings().generator_max_draws,
        eta0=config.tuning.eta0,
        max_iters=config.tuning.max_iters,
        tol=context.tol,
        profiler_path=str(profile_path),
    )
    payload = {"sizes": list(spec.sizes), "profile": str(profile_path), "rows": frame.to_dict(orient="records")}
    return CommandOutcome(payload, {"sizes": frame})


def _build_registry() -> Dict[str, CommandSpec]:
    specs = (
        CommandSpec("validate", "check a network model and export its Laplacian", _run_validate),
        CommandSpec("assess", "worst-case disruption V(M, A) for given monitors and attack nodes", _run_assess),
        CommandSpec("attack", "worst case Q(M|alpha) and argmax attack set per attack type", _run_attack),
        CommandSpec("allocate", "optimal monitor allocation (enumerate or branch-and-bound)", _run_allocate),
        CommandSpec("tune", "raise self-loop gains until the scalability condition holds", _run_tune),
        CommandSpec("simulate", "simulate one admissible damped-sinusoid attack", _run_simulate),
        CommandSpec("verify", "certificate checks and sampled admissible attacks against V(M, A)", _run_verify),
        CommandSpec("fig1", "branch-and-bound against enumeration on random digraphs", _run_fig1),
        CommandSpec("bench", "full against diagonal certificates over a size sweep", _run_bench),
    )
    return {spec.key: spec for spec in specs}


def available_commands() -> Dict[str, str]:
    return {key: spec.description for key, spec in _build_registry().items()}


def write_run_manifest(command: str, config: RunConfig, output_dir: Path, exit_code: int) -> Path:
    manifest = {
        "command": command,
        "exit_code": exit_code,
        "seed": config.seed,
        "jobs": config.resolved_jobs(),
        "config": config.model_dump(mode="json"),
        "versions": {"numpy": np.__version__, "scipy": scipy.__version__, "cvxpy": cp.__version__},
        "captured_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    return write_json(manifest, output_dir / "run_manifest.json")


def _write_outcome(context: RunContext, outcome: CommandOutcome) -> None:
    output_dir = context.output_dir
    result_path = write_json(outcome.payload, output_dir / f"{context.command}_result.json")
    LOGGER.info("Resultado salvo em: %s", result_path)
    for name, frame in outcome.tables.items():
        table_path = write_dataframe(frame, output_dir / f"{context.command}_{name}.csv")
        LOGGER.info("Tabela salva em: %s", table_path)


def dispatch(command: str, config: RunConfig) -> int:
    """Run one command; returns 0 on success, 1 on a method-level failure and 2 on a usage error."""
    registry = _build_registry()
    spec = registry.get(command)
    if spec is None:
        LOGGER.error("Comando desconhecido: %s (disponiveis: %s)", command, ", ".join(registry))
        return EXIT_USAGE

    context = RunContext(command=command, config=config)
    LOGGER.info("Executando comando '%s' (seed=%s, jobs=%s)", command, config.seed, context.jobs)
    try:
        outcome = spec.handler(context)
    except ConfigError as exc:
        LOGGER.error("Configuracao invalida: %s", exc)
        return EXIT_USAGE
    except METHOD_FAILURES as exc:
        LOGGER.error("Falha do metodo em '%s': %s", command, exc)
        failure = {"command": command, "status": "failed", "error_type": type(exc).__name__, "error": str(exc)}
        write_json(failure, context.output_dir / f"{command}_result.json")
        write_run_manifest(command, config, context.output_dir, EXIT_METHOD_FAILURE)
        return EXIT_METHOD_FAILURE
    except (ValueError, FileNotFoundError) as exc:
        LOGGER.error("Entrada invalida para '%s': %s", command, exc)
        return EXIT_USAGE

    exit_code = EXIT_OK if outcome.success else EXIT_METHOD_FAILURE
    _write_outcome(context, outcome)
    write_run_manifest(command, config, context.output_dir, exit_code)
    LOGGER.info(
        "Comando '%s' finalizado com codigo %s",
        command,
        exit_code,
        extra={"command": command, "exit_code": exit_code},
    )
    return exit_code
