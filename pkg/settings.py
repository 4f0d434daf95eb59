"""
Runtime configuration read from the environment (and a local .env file).
CLI flags and API form fields override these defaults.
"""

import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

from models import KernelConfig, OptimizerConfig, TrainConfig

load_dotenv()

BASE_DIR = Path(__file__).resolve().parent

SIGMA_SQ = float(os.getenv("SHIFT_SIGMA_SQ", "2.0"))
TAU = float(os.getenv("SHIFT_TAU", "0.1"))
MAX_ITERS = int(os.getenv("SHIFT_MAX_ITERS", "500"))
F_TOL = float(os.getenv("SHIFT_F_TOL", "1e-9"))
N_RESTARTS = int(os.getenv("SHIFT_RESTARTS", "10"))
LATENT_DIM = int(os.getenv("SHIFT_LATENT_DIM", "5"))
LABELED_FRACTION = float(os.getenv("SHIFT_LABELED_FRACTION", "0.10"))
WORKERS = int(os.getenv("SHIFT_WORKERS", "1"))
SWEEP_GRID = int(os.getenv("SHIFT_SWEEP_GRID", "360"))

LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
LOG_DATEFMT = "%Y-%m-%d %H:%M:%S"

API_HOST = os.getenv("API_HOST", "0.0.0.0")
API_PORT = int(os.getenv("API_PORT", "8007"))
ARCHIVE_ROOT = Path(os.getenv("ARCHIVE_ROOT", str(BASE_DIR / "archives"))).resolve()
OUTPUTS_DIR = Path(os.getenv("OUTPUTS_DIR", str(BASE_DIR / "outputs"))).resolve()


def default_kernel_config(**overrides) -> KernelConfig:
    values = {"sigma_sq": SIGMA_SQ}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return KernelConfig(**values)


def default_optimizer_config(**overrides) -> OptimizerConfig:
    values = {"tau": TAU, "max_iters": MAX_ITERS, "f_tol": F_TOL}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return OptimizerConfig(**values)


def default_train_config(**overrides) -> TrainConfig:
    return TrainConfig(**{k: v for k, v in overrides.items() if v is not None})


def parse_latent_dim(value) -> Optional[int]:
    """'full' (any case) means every shared positive eigen-direction (None); otherwise an int >= 1."""
    text = str(value).strip()
    if text.lower() == "full":
        return None
    p = int(text)
    if p < 1:
        raise ValueError(f"p must be >= 1 or 'full', got {p}")
    return p
