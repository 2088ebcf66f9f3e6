from __future__ import annotations

from pathlib import Path

from dotenv import find_dotenv, load_dotenv
from pydantic import AliasChoices, Field
from pydantic_settings import BaseSettings, SettingsConfigDict


def _load_env() -> None:
    """Load .env from cwd or parent folders."""
    env_path = find_dotenv(filename=".env", usecwd=True)
    if env_path:
        load_dotenv(env_path, override=False)
        return

    here = Path(__file__).resolve()
    for parent in [here.parent, *here.parents]:
        candidate = parent / ".env"
        if candidate.exists():
            load_dotenv(str(candidate), override=False)
            return


_load_env()


class Settings(BaseSettings):
    """Project runtime settings loaded from environment variables."""

    model_config = SettingsConfigDict(extra="ignore")

    debug: bool = Field(
        default=False,
        validation_alias=AliasChoices("DEBUG", "debug"),
    )
    log_level: str = Field(
        default="INFO",
        validation_alias=AliasChoices("LOG_LEVEL", "log_level"),
    )
    output_dir: str = Field(
        default="output",
        validation_alias=AliasChoices("OUTPUT_DIR", "output_dir"),
    )

    sdp_solver: str = Field(
        default="CLARABEL",
        validation_alias=AliasChoices("SDP_SOLVER", "sdp_solver"),
    )
    sdp_feasibility_tol: float = Field(
        default=1e-7,
        gt=0,
        validation_alias=AliasChoices("SDP_FEASIBILITY_TOL", "sdp_feasibility_tol"),
    )
    sdp_gap_tol: float = Field(
        default=1e-7,
        gt=0,
        validation_alias=AliasChoices("SDP_GAP_TOL", "sdp_gap_tol"),
    )
    sdp_strict_epsilon: float = Field(
        default=1e-9,
        gt=0,
        validation_alias=AliasChoices("SDP_STRICT_EPSILON", "sdp_strict_epsilon"),
    )
    sdp_max_iters: int = Field(
        default=500,
        gt=0,
        validation_alias=AliasChoices("SDP_MAX_ITERS", "sdp_max_iters"),
    )

    jobs: int = Field(
        default=0,
        validation_alias=AliasChoices("JOBS", "jobs"),
    )
    attack_enumeration_cap: int = Field(
        default=1_000_000,
        gt=0,
        validation_alias=AliasChoices("ATTACK_ENUMERATION_CAP", "attack_enumeration_cap"),
    )
    allocation_enumeration_cap: int = Field(
        default=100_000,
        gt=0,
        validation_alias=AliasChoices("ALLOCATION_ENUMERATION_CAP", "allocation_enumeration_cap"),
    )
    generator_max_draws: int = Field(
        default=10_000,
        gt=0,
        validation_alias=AliasChoices("GENERATOR_MAX_DRAWS", "generator_max_draws"),
    )


settings = Settings()


def get_settings() -> Settings:
    return settings
