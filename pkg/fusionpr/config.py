"""
Toolkit configuration settings.
"""
import logging
import os
from pathlib import Path

# Base directory
BASE_DIR = Path(__file__).resolve().parent.parent

# Load .env file if it exists (for local development)
env_file = BASE_DIR / ".env"
if env_file.exists():
    with open(env_file) as f:
        for line in f:
            line = line.strip()
            if line and not line.startswith('#') and '=' in line:
                key, value = line.split('=', 1)
                os.environ.setdefault(key.strip(), value.strip())

# Runtime knobs
THREADS_ENV_VAR = "FPR_THREADS"
LOG_LEVEL = os.getenv("FPR_LOG_LEVEL", "WARNING").upper()
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Spherical projection grids
LIDAR_RANGE_HEIGHT = 32
LIDAR_RANGE_WIDTH = 1056
CAMERA_RANGE_HEIGHT = 352
CAMERA_RANGE_WIDTH = 1056
FOV_UP_DEG = 10.0
FOV_DOWN_DEG = -30.0
RANGE_MIN_M = 1.0
RANGE_MAX_M = 80.0
NEAR_CLIP_M = 0.1

# Camera rig
IMAGE_WIDTH = 640
IMAGE_HEIGHT = 352
NUM_CAMERAS = 6

# Descriptors
DESCRIPTOR_DIM = 256
DESCRIPTOR_RANGE_BINS = 8

# Benchmark organization
DELTA_M = 1.0
GAMMA_DAYS = 105
RHO_POS_M = 9.0
RHO_NEG_M = 18.0
N_POS = 2
N_NEG = 4
SIGMA_NEG = 6
DEFAULT_SEED = 0
VAL_FRACTION = 0.0
MINING_MODES = ["faithful", "sanitized"]

# Losses
LAMBDA_DEPTH = 0.01
LAMBDA_TRIPLET = 1.00
LAMBDA_REPROJECTION = 0.01
TRIPLET_MARGIN = 0.5

# Evaluation
RECALL_KS = [1, 5, 10, 20]
EVAL_SUBSETS = ["test", "validation", "all"]

# Dataset format
FORMAT_VERSION = 1
SAMPLE_PERIOD_S = 0.5  # 2 Hz, so SIGMA_NEG samples span 3 s


def resolve_threads(value=None) -> int:
    """
    Worker count: explicit value, else FPR_THREADS, else 1.
    """
    from fusionpr.errors import ConfigurationError

    raw = value if value is not None else os.getenv(THREADS_ENV_VAR)
    if raw is None or raw == "":
        return 1
    try:
        threads = int(raw)
    except (TypeError, ValueError):
        raise ConfigurationError(f"thread count must be an integer, got {raw!r}")
    if threads < 1:
        raise ConfigurationError(f"thread count must be >= 1, got {threads}")
    return threads


def configure_logging(level: str = None) -> None:
    """Install one stderr handler on the package logger."""
    level_name = (level or LOG_LEVEL).upper()
    logger = logging.getLogger("fusionpr")
    logger.setLevel(getattr(logging, level_name, logging.WARNING))
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)
