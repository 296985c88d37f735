"""
Centralized configuration and settings for the DMTP trajectory prediction toolkit.

Loads environment variables and defines application-wide constants following
the twelve-factor app methodology for configuration management. Run-specific
overrides (config files and CLI flags) are layered on top of these defaults in
``src.config.train_config``.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

# =============================================================================
# BASE PATHS
# =============================================================================

ROOT_DIR: Path = Path(__file__).resolve().parents[2]
OUTPUTS_DIR: Path = Path(os.getenv("DMTP_OUTPUT_DIR", str(ROOT_DIR / "outputs")))

TOOL_VERSION: str = "1.0.0"

# =============================================================================
# SCENE HORIZONS
# =============================================================================

# 10 Hz sampling: 1 s of observation, 8 s of prediction.
T_OBS: int = int(os.getenv("T_OBS", "10"))
T_FUT: int = int(os.getenv("T_FUT", "80"))
DT_SECONDS: float = 0.1

# Physical limits shared by the generator, the decoder bound and the
# kinematic penalty of the diffusion loss.
V_MAX_MPS: float = 40.0
A_MAX_MPS2: float = float(os.getenv("A_MAX_MPS2", "10.0"))

# Positions and speeds are divided by these before entering the networks.
POSITION_SCALE_M: float = 50.0
SPEED_SCALE_MPS: float = 10.0

# =============================================================================
# MODEL SIZES
# =============================================================================

D_MODEL: int = int(os.getenv("D_MODEL", "128"))
NUM_HEADS: int = int(os.getenv("NUM_HEADS", "4"))
D_LATENT: int = int(os.getenv("D_LATENT", "64"))
NUM_MODES: int = int(os.getenv("NUM_MODES", "6"))
POINTS_PER_POLYLINE: int = int(os.getenv("POINTS_PER_POLYLINE", "16"))

KAN_GRID_SIZE: int = int(os.getenv("KAN_GRID_SIZE", "8"))
KAN_SPLINE_ORDER: int = int(os.getenv("KAN_SPLINE_ORDER", "3"))
KAN_GRID_RANGE: float = float(os.getenv("KAN_GRID_RANGE", "3.0"))

LAYER_NORM_EPS: float = 1e-5

# =============================================================================
# DIFFUSION
# =============================================================================

DIFFUSION_STEPS: int = int(os.getenv("DIFFUSION_STEPS", "50"))
BETA_START: float = float(os.getenv("BETA_START", "1e-4"))
BETA_END: float = float(os.getenv("BETA_END", "0.02"))

# Number of future steps decoded linearly from a latent for the kinematic penalty.
PREVIEW_STEPS: int = int(os.getenv("PREVIEW_STEPS", "10"))

# =============================================================================
# TRAINING
# =============================================================================

LEARNING_RATE: float = float(os.getenv("LEARNING_RATE", "1e-3"))
BATCH_SIZE: int = int(os.getenv("BATCH_SIZE", "4"))
EPOCHS: int = int(os.getenv("EPOCHS", "10"))
LAMBDA_KIN: float = float(os.getenv("LAMBDA_KIN", "0.1"))
LAMBDA_CONF: float = float(os.getenv("LAMBDA_CONF", "0.5"))
GRAD_CLIP_NORM: float = float(os.getenv("GRAD_CLIP_NORM", "1.0"))
LATENT_DROPOUT: float = float(os.getenv("LATENT_DROPOUT", "0.5"))
DEFAULT_SEED: int = int(os.getenv("DMTP_SEED", "0"))

# =============================================================================
# EVALUATION AND EXPLANATION
# =============================================================================

# Fixed final-step Euclidean threshold in place of WOMD's velocity-scaled boxes.
MISS_THRESHOLD_M: float = float(os.getenv("MISS_THRESHOLD_M", "2.0"))

# Diffusion seeds averaged per coalition when explaining a stochastic model.
SHAPLEY_SEEDS: int = int(os.getenv("SHAPLEY_SEEDS", "4"))

# Tolerance of the efficiency check asserted on every scene report.
EFFICIENCY_TOLERANCE: float = 1e-9
