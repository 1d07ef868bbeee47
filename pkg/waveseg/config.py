"""
Configuration settings for the wavelet segmentation toolkit.
This file loads overrides from the environment (or a .env file) and sets up
the defaults every module reads.
"""

import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _int_setting(name: str, default: int) -> int:
    raw = os.getenv(name, str(default))
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}") from None


def _float_setting(name: str, default: float) -> float:
    raw = os.getenv(name, str(default))
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"{name} must be a number, got {raw!r}") from None


def _flag(name: str, default: str = "false") -> bool:
    return os.getenv(name, default).lower() == "true"


SUPPORTED_MODES = ("periodic", "symmetric", "zero")

# Transform settings
DEFAULT_WAVELET = os.getenv("WAVESEG_WAVELET", "haar")
DEFAULT_MODE = os.getenv("WAVESEG_MODE", "symmetric")

if DEFAULT_MODE not in SUPPORTED_MODES:
    raise ValueError(f"WAVESEG_MODE must be one of {SUPPORTED_MODES}, got {DEFAULT_MODE!r}")

# Training settings (SGD with momentum)
EPOCHS = _int_setting("WAVESEG_EPOCHS", 300)
LEARNING_RATE = _float_setting("WAVESEG_LR", 0.05)
MOMENTUM = _float_setting("WAVESEG_MOMENTUM", 0.9)
WEIGHT_DECAY = _float_setting("WAVESEG_WEIGHT_DECAY", 0.0)
BATCH_SIZE = _int_setting("WAVESEG_BATCH_SIZE", 20)

# Optional: shorter runs for eval/dev
FAST_EVAL = _flag("FAST_EVAL")
if FAST_EVAL:
    EPOCHS = _int_setting("WAVESEG_FAST_EPOCHS", 40)

# Synthetic dataset and toy network shape
NUM_SAMPLES = _int_setting("WAVESEG_SAMPLES", 200)
NUM_TEST_SAMPLES = _int_setting("WAVESEG_TEST_SAMPLES", 50)
IMAGE_SIZE = _int_setting("WAVESEG_IMAGE_SIZE", 32)
DEPTH = _int_setting("WAVESEG_DEPTH", 2)
try:
    WIDTHS = tuple(int(w) for w in os.getenv("WAVESEG_WIDTHS", "8,16").split(","))
except ValueError:
    raise ValueError("WAVESEG_WIDTHS must be a comma separated list of integers") from None

if len(WIDTHS) != DEPTH:
    raise ValueError(f"WAVESEG_WIDTHS needs {DEPTH} entries, got {len(WIDTHS)}")

CLASS_NAMES = ("background", "blob", "thin-line")
IGNORE_LABEL = 255

# Numeric tolerances
FILTER_TOL = 1e-10  # filter-bank identities
PR_TOL = 1e-8  # perfect reconstruction

VERBOSE = _flag("WAVESEG_VERBOSE")
