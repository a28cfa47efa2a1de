"""Application configuration management.

Settings come from (highest priority first) init kwargs, environment variables,
the ``.env`` file, and a TOML file whose path is read from ``MEMORY_CONFIG_FILE``.
Nested sections can be overridden with ``__``, e.g. ``ACTIVATION__D=0.4``.
"""

import logging
import os
import sys
from functools import lru_cache
from pathlib import Path
from typing import Annotated, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    TomlConfigSettingsSource,
)

from app.errors import ConfigInvalid
from app.models.activation import SECONDS_PER_DAY, ActivationParams, ScoreWeights

logger = logging.getLogger(__name__)

CONFIG_FILE_ENV = "MEMORY_CONFIG_FILE"
DEFAULT_CONFIG_FILE = "./memory.toml"
DATA_DIR = Path(__file__).parent / "data"

DEFAULT_FUNCTIONAL_RELATIONS = (
    "lives_in",
    "works_at",
    "warranty_period",
    "deadline",
    "name",
    "age",
    "email",
    "phone",
    "birthday",
    "status",
)


class MemorySettings(BaseModel):
    """Thresholds and rule tables of the storage and maintenance passes."""

    model_config = ConfigDict(frozen=True)

    embedding_dim: Annotated[int, Field(ge=8, le=4096)] = 256
    dup_threshold: Annotated[float, Field(gt=0.0, le=1.0)] = 0.92
    outdated_threshold: Annotated[float | None, Field(gt=0.0, lt=1.0)] = None
    node_merge_threshold: Annotated[float, Field(gt=0.0, le=1.0)] = 0.9
    functional_relations: tuple[str, ...] = DEFAULT_FUNCTIONAL_RELATIONS
    gazetteer_path: str = str(DATA_DIR / "gazetteer.txt")
    lexicon_path: str = str(DATA_DIR / "emotion_lexicon.json")
    acknowledgments_path: str = str(DATA_DIR / "acknowledgments.txt")
    grace_seconds: Annotated[int, Field(ge=0)] = 7 * SECONDS_PER_DAY
    weaken_ceiling: Annotated[float, Field(gt=0.0)] = 1.0
    failed_strength: Annotated[float, Field(gt=0.0)] = 0.01
    ambiguity_window_seconds: Annotated[int, Field(ge=0)] = 3600
    reinforce_delta: Annotated[float, Field(ge=0.0)] = 0.1
    strength_cap: Annotated[float, Field(gt=0.0)] = 10.0
    score_floor: Annotated[float, Field(ge=0.0, le=1.0)] = 0.3
    context_window: Annotated[int, Field(ge=0)] = 5
    feedback_path: str | None = None

    @field_validator("functional_relations", mode="before")
    @classmethod
    def split_relations(cls, v):
        """Accept a comma separated string from the environment."""
        if isinstance(v, str):
            return tuple(item.strip() for item in v.split(",") if item.strip())
        return v


class HubSettings(BaseModel):
    """Multi-agent sharing settings."""

    model_config = ConfigDict(frozen=True)

    envelope_ttl_seconds: Annotated[int, Field(gt=0)] = SECONDS_PER_DAY


class AnnotatorSettings(BaseModel):
    """External annotator adapter; the rule-based annotator is used when no URL is set."""

    model_config = ConfigDict(frozen=True)

    adapter_url: str | None = None
    timeout_seconds: Annotated[float, Field(gt=0.0)] = 5.0
    fallback_to_default: bool = True


class Settings(BaseSettings):
    """Application settings loaded from environment variables and the TOML config file."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_nested_delimiter="__",
        case_sensitive=False,
        frozen=True,
        extra="ignore",
    )

    # Application
    app_env: Literal["development", "production", "testing"] = "development"
    app_host: str = "127.0.0.1"
    app_port: Annotated[int, Field(ge=0, le=65535)] = 8000

    # Database
    database_path: str = "./data/memory.sqlite3"
    database_checkpoint_interval: int = 300
    write_queue_result_timeout: float = 30.0

    # Logging
    log_level: str = "INFO"
    log_file: str = "./logs/maintenance.log"

    # Engine sections
    activation: ActivationParams = ActivationParams()
    weights: ScoreWeights = ScoreWeights()
    memory: MemorySettings = MemorySettings()
    hub: HubSettings = HubSettings()
    annotator: AnnotatorSettings = AnnotatorSettings()

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        toml_file = os.environ.get(CONFIG_FILE_ENV, DEFAULT_CONFIG_FILE)
        return (
            init_settings,
            env_settings,
            dotenv_settings,
            TomlConfigSettingsSource(settings_cls, toml_file=toml_file),
        )

    @property
    def is_production(self) -> bool:
        return self.app_env == "production"

    @property
    def is_testing(self) -> bool:
        return self.app_env == "testing"

    @property
    def outdated_threshold(self) -> float:
        """Outdated threshold falls back to the forget threshold."""
        if self.memory.outdated_threshold is not None:
            return self.memory.outdated_threshold
        return self.activation.forget_threshold

    @field_validator("database_path", "log_file")
    @classmethod
    def ensure_parent_directory(cls, v: str) -> str:
        Path(v).parent.mkdir(parents=True, exist_ok=True)
        return v

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        level = v.upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"unknown log level {v!r}")
        return level

    @model_validator(mode="after")
    def check_outdated_threshold(self) -> "Settings":
        outdated = self.memory.outdated_threshold
        if outdated is not None and outdated <= self.activation.offset:
            raise ValueError("memory.outdated_threshold must exceed activation.offset")
        return self


def build_settings(**overrides) -> Settings:
    """Build settings, converting validation failures into ``ConfigInvalid``."""
    try:
        return Settings(**overrides)
    except ValidationError as exc:
        details = "; ".join(
            f"{' -> '.join(str(loc) for loc in error['loc'])}: {error['msg']}"
            for error in exc.errors()
        )
        raise ConfigInvalid(f"Configuration validation failed: {details}") from exc


def load_settings() -> Settings:
    """
    Load and validate application settings.

    Returns:
        Settings instance

    Raises:
        SystemExit: If configuration is invalid
    """
    try:
        settings = build_settings()
    except ConfigInvalid as exc:
        logger.error("%s", exc.message)
        sys.exit(1)

    logger.info("Configuration loaded (env=%s)", settings.app_env)
    logger.info("Database: %s", settings.database_path)
    logger.info(
        "Activation d=%s lambda=%s offset=%s threshold=%s time_unit=%ss",
        settings.activation.d,
        settings.activation.lam,
        settings.activation.offset,
        settings.activation.forget_threshold,
        settings.activation.time_unit_seconds,
    )
    if settings.annotator.adapter_url:
        logger.info("External annotator: %s", settings.annotator.adapter_url)
    if settings.is_production and settings.app_host == "0.0.0.0":
        logger.warning("APP_HOST is 0.0.0.0 - the API has no authentication layer")
    return settings


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Return cached application settings instance."""
    return load_settings()


def clear_settings_cache() -> None:
    """Clear cached settings instance (primarily for tests)."""
    get_settings.cache_clear()


def get_settings_dependency() -> Settings:
    """FastAPI dependency provider for application settings."""
    return get_settings()


class _SettingsProxy:
    """Read-only proxy to the cached settings."""

    def __getattr__(self, name: str):
        return getattr(get_settings(), name)

    def __setattr__(self, name: str, value) -> None:
        raise AttributeError(
            "Application settings are immutable. "
            "Set environment variables and call clear_settings_cache() in tests."
        )


settings = _SettingsProxy()
