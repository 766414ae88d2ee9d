from pydantic_settings import BaseSettings
from typing import Optional


class Settings(BaseSettings):
    """Application configuration settings."""

    # Numerical tolerances
    solver_tol: float = 1e-10
    hjb_tol: float = 1e-8
    hurwitz_margin: float = 1e-10
    are_max_iter: int = 50

    # Memory guard: largest n^d a synthesis may allocate
    element_budget: int = 500_000_000

    # Coefficient arrays above this size go to the binary sidecar
    sidecar_threshold: int = 1_000_000

    # Simulation
    divergence_norm: float = 1e6
    min_step_fraction: float = 1e-14
    min_output_samples: int = 200
    recovery_ratio: float = 0.05

    # Application Configuration
    output_dir: str = "./runs"
    log_level: str = "INFO"
    log_file: Optional[str] = None

    app_name: str = "ppr"
    app_version: str = "1.0.0"
    app_description: str = "Polynomial feedback synthesis for polynomial control-affine systems"

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        env_prefix = "PPR_"
        case_sensitive = False


def current_settings() -> Settings:
    """Re-read the environment; used where overrides may be set after import."""
    return Settings()


# Global settings instance
settings = Settings()
