from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict

from src.core import constants


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8", extra="ignore")

    LOG_LEVEL: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "INFO"
    LOG_JSON: bool = False
    LOG_FILE: str | None = None

    XI: float = constants.DEFAULT_XI
    MU: float = constants.DEFAULT_MU
    S0_MAX_OUTER: int = constants.S0_MAX_OUTER
    S0_TOL: float = constants.S0_TOL
    LBFGS_MEMORY: int = constants.LBFGS_MEMORY
    LBFGS_MAX_ITER: int = constants.LBFGS_MAX_ITER

    NM_MAX_EVAL_FACTOR: int = constants.NM_MAX_EVAL_FACTOR
    NM_INITIAL_STEP: float = constants.NM_INITIAL_STEP

    UNCHANGED_TOL: float = constants.UNCHANGED_TOL
    SUPPORT_VALUE_TOL: float = constants.SUPPORT_VALUE_TOL

    MAX_WORKERS: int = 4
    DEFAULT_SEED: int = 20240101


settings = Settings()
