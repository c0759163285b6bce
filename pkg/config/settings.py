"""Configuration settings for roughocp."""
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

try:
    from pydantic_settings import BaseSettings
except ImportError:
    from pydantic import BaseSettings


class Settings(BaseSettings):
    """Solver defaults, overridable from the environment or a .env file."""

    # Projected gradient (control loop)
    ocp_rho: float = float(os.getenv("OCP_RHO", "0.5"))
    ocp_eps: float = float(os.getenv("OCP_EPS", "1e-8"))
    ocp_max_iter: int = int(os.getenv("OCP_MAX_ITER", "2000"))
    ocp_step_safeguard: bool = os.getenv("OCP_STEP_SAFEGUARD", "false").lower() == "true"

    # Coarse basis construction
    homog_layer_factor: float = float(os.getenv("HOMOG_LAYER_FACTOR", "2.0"))
    homog_workers: int = int(os.getenv("HOMOG_WORKERS", "1"))
    homog_rhs_block: int = int(os.getenv("HOMOG_RHS_BLOCK", "128"))

    # Coefficient fields
    coeff_sample_resolution: int = int(os.getenv("COEFF_SAMPLE_RESOLUTION", "1024"))
    synthetic_cells: int = int(os.getenv("SYNTHETIC_CELLS", "64"))

    # Output
    log_level: str = os.getenv("LOG_LEVEL", "INFO")
    output_dir: str = os.getenv("OUTPUT_DIR", "results")
    csv_digits: int = int(os.getenv("CSV_DIGITS", "17"))

    class Config:
        env_file = ".env"
        case_sensitive = False
        extra = "ignore"


# Global settings instance
settings = Settings()
