"""
Django settings for the rrmdp project.

The project has no web surface: Django provides the run registry (ORM over
SQLite), config validation (forms), logging and the command line
(management commands) for the ``robust`` app.
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent
DB_PATH = Path(os.environ.get("DB_PATH", BASE_DIR / "db.sqlite3")).resolve()

# Only used for hashing internals; nothing here is served
SECRET_KEY = os.environ.get("SECRET_KEY", "rrmdp-local-only-not-a-secret")

DEBUG = os.environ.get("DEBUG", "False") == "True"

ALLOWED_HOSTS: list[str] = []


# Application definition

INSTALLED_APPS = [
    "robust.apps.RobustConfig",
]


# Database

DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": DB_PATH,
        "OPTIONS": {
            "init_command": (
                "PRAGMA journal_mode=WAL;"
                "PRAGMA synchronous=NORMAL;"
                "PRAGMA busy_timeout=5000;"
                "PRAGMA cache_size=-64000;"
            ),
        },
    }
}

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


# Internationalization

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True


# Logging

RRMDP_LOG_LEVEL = os.environ.get("RRMDP_LOG_LEVEL", "INFO")

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "{levelname} {name}: {message}", "style": "{"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "root": {"handlers": ["console"], "level": "WARNING"},
    "loggers": {
        "robust": {"level": RRMDP_LOG_LEVEL},
        "django": {"level": "WARNING"},
    },
}


# Toolkit

RRMDP_OUTPUT_DIR = Path(os.environ.get("RRMDP_OUTPUT_DIR", BASE_DIR / "runs")).resolve()

# Above this many states exact evaluation falls back to iteration
RRMDP_DENSE_SOLVE_MAX_STATES = int(os.environ.get("RRMDP_DENSE_SOLVE_MAX_STATES", "2000"))

RRMDP_DEFAULTS = {
    "spec": {"alpha": 0.0, "p": 2.0, "flavor": "coupled"},
    "pg": {
        "parametrization": "direct",
        "temperature": 1.0,
        "step_rule": "armijo",
        "armijo_c1": 1e-4,
        "backtrack": 0.5,
        "learning_rate": None,
        "max_iters": 1000,
        "grad_tol": 1e-6,
        "smoothness_exponent": "q",
    },
    "ac": {
        "total_steps": 20000,
        "batch_size": 64,
        "c_fast": 1.0,
        "c_slow": 0.5,
        "fast_exponent": 0.4,
        "slow_exponent": 0.5,
        "occupancy_estimator": "bootstrap",
        "record_every": 100,
    },
    # tabular study parameters
    "sweep": {
        "seed": 1,
        "S_list": [5, 10, 15],
        "A": 5,
        "gamma": 0.99,
        "p": 2.0,
        "alpha_grid": [0.0, 0.01, 0.05, 0.1, 0.5, 1.0],
        "n_samples": 1000,
        "cvar_level": 0.05,
        "sigma2": 0.1,
        "methods": ["coupled", "s-rect", "nominal"],
        "pg": {"step_rule": "armijo", "max_iters": 300, "grad_tol": 1e-6},
    },
}
