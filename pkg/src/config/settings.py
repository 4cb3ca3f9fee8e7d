"""
Configuration management using Pydantic for type-safe settings.
"""
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Runtime settings loaded from DPPMC_* environment variables or a .env file"""

    # Logging Configuration
    log_level: str = "INFO"

    # Overrides the seed list of every experiment config when set (DPPMC_SEED)
    seed: Optional[int] = None

    # Experiment output
    output_dir: str = "runs"
    jobs: int = 1

    # Exact enumeration oracles
    enumeration_cap_k_dpp: int = 20
    enumeration_cap_dpp: int = 16

    model_config = SettingsConfigDict(
        env_prefix="DPPMC_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


# Global settings instance
settings = Settings()
