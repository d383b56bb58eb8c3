import os

from dotenv import load_dotenv

load_dotenv()

APP_NAME = "ovcollapse"
APP_VERSION = "0.3.0"

OUTPUT_DIR = os.getenv("OVC_OUTPUT_DIR", "out")
JOBS = int(os.getenv("OVC_JOBS", "1"))
LOG_LEVEL = os.getenv("OVC_LOG_LEVEL", "INFO")
DEFAULT_SEED = int(os.getenv("OVC_SEED", "42"))
DEFAULT_FORMATS = os.getenv("OVC_FORMATS", "csv,json,svg")
