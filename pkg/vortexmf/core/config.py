from typing import Optional
from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import field_validator


class Settings(BaseSettings):
    DATABASE_URL: str = "sqlite:///./vortexmf_runs.db"
    RUN_STORE_ENABLED: bool = True
    LOG_LEVEL: str = "INFO"
    OUTPUT_DIR: Optional[str] = None

    # Solver defaults
    DEFAULT_DAMPING: float = 0.5
    RADIAL_TOL: float = 1e-10
    GRID_TOL: float = 1e-8
    MAX_ITER: int = 10000
    PSI_CEILING: float = 40.0
    ENERGY_TOL: float = 1e-8
    LOG_MESH_RMIN: float = 1e-6

    # Blow-up diagnostics
    PLATEAU_TOL: float = 1e-3
    RATIO_THRESHOLD: float = 10.0

    THREADS: int = 1

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False
    )

    @field_validator("LOG_LEVEL", mode="before")
    @classmethod
    def normalize_log_level(cls, v):
        if isinstance(v, str):
            return v.strip().upper()
        return v

    @field_validator("THREADS", mode="before")
    @classmethod
    def at_least_one_thread(cls, v):
        if v is None or v == "":
            return 1
        return max(1, int(v))

settings = Settings()
