"""
Django settings for the rca-qmle project.

The project is batch-only: there is no web surface, no database and no
sessions. Django provides settings, logging configuration and the
management-command entry point (``python manage.py rca ...``).
"""

import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent

DEBUG = os.environ.get("DEBUG", "False").lower() in ("true", "1", "yes")

# Nothing is signed; Django only requires the setting to exist.
SECRET_KEY = os.environ.get("SECRET_KEY", "rca-qmle-batch-only")

INSTALLED_APPS = [
    "rca",
]

DATABASES = {}

LANGUAGE_CODE = "en-us"

TIME_ZONE = os.environ.get("TIME_ZONE", "UTC")

USE_I18N = False
USE_TZ = True


def _threads_from_env() -> int:
    """Worker threads for Monte Carlo replications (0 or unset = machine parallelism)."""
    raw = os.environ.get("RCA_THREADS", "0")
    try:
        value = int(raw)
    except ValueError:
        value = 0
    return value if value > 0 else (os.cpu_count() or 1)


# Experiment artifacts land here unless --out is given
RCA_OUTPUT_DIR = Path(os.environ.get("RCA_OUTPUT_DIR", BASE_DIR / "output"))

RCA_THREADS = _threads_from_env()

RCA_LOG_LEVEL = os.environ.get("RCA_LOG_LEVEL", "DEBUG" if DEBUG else "INFO").upper()

# Logging
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "{levelname} {asctime} {module} {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "verbose",
        },
    },
    "root": {
        "handlers": ["console"],
        "level": "INFO",
    },
    "loggers": {
        "rca": {
            "handlers": ["console"],
            "level": RCA_LOG_LEVEL,
            "propagate": False,
        },
    },
}
