"""Environment-driven settings."""

import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

PACKAGE_DIR = Path(__file__).parent

# Worked-example model files are shipped inside the package
MODELS_DIR = PACKAGE_DIR / "models"

OUTPUT_DIR = Path(os.getenv("CTOQW_OUTPUT_DIR", "output"))
LOG_LEVEL = os.getenv("CTOQW_LOG_LEVEL", "WARNING").upper()

MAX_WINDOW_SITES = int(os.getenv("CTOQW_MAX_WINDOW", "4096"))
QUADRATURE_MAX_NODES = int(os.getenv("CTOQW_QUADRATURE_MAX_NODES", "2048"))
