from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

REPO_ROOT = Path(__file__).resolve().parent.parent


class Settings(BaseSettings):
    """Process-level settings read from NDBFT_* environment variables or .env."""

    model_config = SettingsConfigDict(
        env_prefix="NDBFT_", env_file=".env", extra="ignore"
    )

    log_level: str = "INFO"
    json_logs: bool = False
    protocol_config: Path = REPO_ROOT / "configs" / "replica_config.yaml"
    scenario_dir: Path = REPO_ROOT / "configs" / "scenarios"
    output_dir: Path = Field(default=Path("bench-results"))


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()
