from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="PRIVEX_", env_file=".env", extra="ignore")

    # Logging
    log_level: str = "INFO"
    log_json: bool = False

    # API configuration
    host: str = "0.0.0.0"
    port: int = 8000
    debug: bool = False
    release_path: str = "./release.json"

    # Numerical configuration
    gram_max_points: int = 10_000  # precompute the Gram matrix up to this many points
    mc_chunk_trials: int = 10_000  # Monte-Carlo trials held in memory at once


settings = Settings()
