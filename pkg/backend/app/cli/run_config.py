from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.config import get_settings
from app.core.errors import ConfigError
from app.network.types import NodeDefaults, ThreatModel
from app.sdp.solver import SolverTolerances

DEFAULT_DOCUMENT: Dict[str, Any] = {"generator": {"n": 10, "p": 0.25}}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GeneratorSpec(_Strict):
    n: int = Field(default=10, ge=1)
    p: float = Field(default=0.25, gt=0, le=1)
    self_loop: float = Field(default=0.7, gt=0)
    weight: float = Field(default=1.0, gt=0)
    threshold: float = Field(default=0.5, gt=0)
    sensor_cost: float = Field(default=0.3, gt=0)
    max_draws: Optional[int] = Field(default=None, gt=0)

    def node_defaults(self) -> NodeDefaults:
        return NodeDefaults(self.self_loop, self.weight, self.threshold, self.sensor_cost)


class AttackTypeSpec(_Strict):
    alpha: int = Field(gt=0)
    probability: float = Field(ge=0, le=1)


class ToleranceSpec(_Strict):
    feasibility: Optional[float] = Field(default=None, gt=0)
    gap: Optional[float] = Field(default=None, gt=0)
    strict_epsilon: Optional[float] = Field(default=None, gt=0)
    max_iters: Optional[int] = Field(default=None, gt=0)
    solver: Optional[str] = None


class SimulationSpec(_Strict):
    horizon: float = Field(default=40.0, gt=0)
    dt: float = Field(default=1e-3, gt=0)
    samples: int = Field(default=100, ge=1)
    terms_per_channel: int = Field(default=2, ge=1)

    @model_validator(mode="after")
    def _step_fits_horizon(self) -> "SimulationSpec":
        if self.dt > self.horizon / 100.0:
            raise ValueError("dt must not exceed horizon/100")
        return self


class TuningSpec(_Strict):
    eta0: float = Field(default=0.1, gt=0)
    max_iters: int = Field(default=30, ge=1)
    shrink: bool = True


class Fig1Spec(_Strict):
    n_graphs: int = Field(default=20, ge=1)
    n: int = Field(default=10, ge=1)
    p: float = Field(default=0.25, gt=0, le=1)


class BenchSpec(_Strict):
    sizes: List[int] = Field(default_factory=lambda: [2, 5, 10, 20, 30, 50])
    reps: int = Field(default=3, ge=1)
    timeout_seconds: Optional[float] = Field(default=None, gt=0)
    sequential: bool = True
    include_allocation: bool = False

    @field_validator("sizes")
    @classmethod
    def _positive_sizes(cls, value: List[int]) -> List[int]:
        if not value or any(size < 1 for size in value):
            raise ValueError("sizes must be a non-empty list of positive integers")
        return value


class RunConfig(_Strict):
    network_file: Optional[Path] = None
    generator: Optional[GeneratorSpec] = None
    attack_types: List[AttackTypeSpec] = Field(
        default_factory=lambda: [
            AttackTypeSpec(alpha=1, probability=0.5),
            AttackTypeSpec(alpha=2, probability=0.35),
            AttackTypeSpec(alpha=3, probability=0.15),
        ]
    )
    energy_bound: float = Field(default=10.0, gt=0)
    budget: int = Field(default=3, ge=0)
    mode: Literal["full", "diagonal"] = "full"
    method: Literal["enumerate", "bnb"] = "bnb"
    big_m: Union[Literal["exact"], float] = "exact"
    monitors: List[int] = Field(default_factory=list)
    attack_nodes: Optional[List[int]] = None
    tolerances: ToleranceSpec = Field(default_factory=ToleranceSpec)
    output_dir: Optional[str] = None
    seed: int = 0
    jobs: Optional[int] = None
    dump_problem: bool = False
    simulation: SimulationSpec = Field(default_factory=SimulationSpec)
    tuning: TuningSpec = Field(default_factory=TuningSpec)
    fig1: Fig1Spec = Field(default_factory=Fig1Spec)
    bench: BenchSpec = Field(default_factory=BenchSpec)

    @field_validator("attack_types")
    @classmethod
    def _threat_is_consistent(cls, value: List[AttackTypeSpec]) -> List[AttackTypeSpec]:
        ThreatModel.from_pairs([(item.alpha, item.probability) for item in value], energy_bound=1.0)
        return value

    @field_validator("big_m")
    @classmethod
    def _positive_big_m(cls, value: Union[str, float]) -> Union[str, float]:
        if value != "exact" and not float(value) > 0:
            raise ValueError("big_m must be 'exact' or a positive number")
        return value

    @model_validator(mode="after")
    def _single_model_source(self) -> "RunConfig":
        if (self.network_file is None) == (self.generator is None):
            raise ValueError("exactly one of network_file or generator must be given")
        return self

    def threat(self) -> ThreatModel:
        return ThreatModel.from_pairs(
            [(item.alpha, item.probability) for item in self.attack_types], self.energy_bound
        )

    def solver_tolerances(self) -> SolverTolerances:
        base = SolverTolerances.from_settings()
        spec = self.tolerances
        return SolverTolerances(
            feasibility=spec.feasibility or base.feasibility,
            gap=spec.gap or base.gap,
            strict_epsilon=spec.strict_epsilon or base.strict_epsilon,
            max_iters=spec.max_iters or base.max_iters,
            solver=(spec.solver or base.solver).upper(),
        )

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir or get_settings().output_dir)

    def resolved_jobs(self) -> int:
        return get_settings().jobs if self.jobs is None else self.jobs


def _field_path(location: tuple) -> str:
    return ".".join(str(part) for part in location) or "<root>"


def parse_config(document: str | bytes | Dict[str, Any]) -> RunConfig:
    """Strictly validated run configuration from a JSON document or an already decoded mapping."""
    if isinstance(document, (str, bytes)):
        try:
            payload = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON document ({exc.msg} at line {exc.lineno})") from exc
    else:
        payload = document
    if not isinstance(payload, dict):
        raise ConfigError("configuration document must be a JSON object")

    try:
        config = RunConfig.model_validate(payload)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(first.get("msg", "invalid value"), _field_path(tuple(first.get("loc", ())))) from exc

    if config.network_file is not None and not config.network_file.is_file():
        raise ConfigError(f"file not found: {config.network_file}", "network_file")
    return config


def load_config_document(path: str | Path | None) -> Dict[str, Any]:
    if path is None:
        return json.loads(json.dumps(DEFAULT_DOCUMENT))
    source = Path(path)
    if not source.is_file():
        raise ConfigError(f"file not found: {source}", "--config")
    try:
        payload = json.loads(source.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON document ({exc.msg} at line {exc.lineno})", "--config") from exc
    if not isinstance(payload, dict):
        raise ConfigError("configuration document must be a JSON object", "--config")
    return payload
