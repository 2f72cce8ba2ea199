import os
from typing import Literal

from pydantic import BaseSettings, validator
from sympy import isprime

PROJECT_NAME = "Congruence Workbench"
VERSION = "1.0.0"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class SessionConfig(BaseSettings):
    # Base ring Z_p at precision N
    p: int = 5
    guard: int = 2
    N: int = 8

    # Truncation of power series
    D: int = 16
    k_max: int = 12

    seed: int = 0
    strictness: Literal["standard", "strict"] = "standard"
    max_escalations: int = 2

    log_level: str = "WARNING"
    zoo_path: str = os.path.join("data", "zoo")

    class Config:
        env_prefix = "CONGR_"
        allow_mutation = False

        @classmethod
        def customise_sources(cls, init_settings, env_settings, file_secret_settings):
            # CONGR_* variables win over flags passed by the CLI
            return env_settings, init_settings, file_secret_settings

    @validator("p")
    def _odd_prime(cls, value):
        if value == 2 or not isprime(value):
            raise ValueError(f"p must be an odd prime, got {value}")
        return value

    @validator("guard")
    def _guard_band(cls, value):
        if value < 2:
            raise ValueError("guard must be at least 2")
        return value

    @validator("N")
    def _precision(cls, value, values):
        guard = values.get("guard", 2)
        if value < guard + 2:
            raise ValueError(f"N must be at least guard + 2 = {guard + 2}")
        return value

    @validator("log_level")
    def _level_name(cls, value):
        if value.upper() not in LOG_LEVELS:
            raise ValueError(f"log_level must be one of {', '.join(LOG_LEVELS)}")
        return value.upper()

    @validator("D", "k_max", "max_escalations")
    def _positive(cls, value):
        if value <= 0:
            raise ValueError("must be positive")
        return value

    @property
    def stabilization_window(self) -> int:
        """Number of consecutive levels that must agree."""
        return 3 if self.strictness == "strict" else 2

    def escalated(self) -> "SessionConfig":
        return self.copy(update={"N": self.N + self.guard})

    def overridden(self, **fields) -> "SessionConfig":
        """Copy with explicit field values (e.g. from a [precision] section), re-validated."""
        merged = {**self.dict(), **{k: v for k, v in fields.items() if v is not None}}
        return SessionConfig(**merged)


settings = SessionConfig()
