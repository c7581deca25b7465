"""Lab configuration."""

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Process-level settings, read from the environment or a .env file."""

    # Worker pool size when --workers is not given
    LAB_WORKERS: int = 1

    # Resource ceilings
    LAB_ENUMERATION_CEILING: int = 2_000_000
    LAB_MAX_CONFIG_DIM: int = 8
    LAB_DENSE_CEILING: int = 4000

    # Output and logging
    LAB_OUTPUT_DIR: str = "runs"
    LAB_LOG_LEVEL: str = "INFO"

    # Optional OTLP/gRPC collector for metrics and traces
    LAB_OTLP_ENDPOINT: str | None = None

    class Config:
        """Pydantic config."""

        env_file = ".env"
        case_sensitive = True


settings = Settings()
