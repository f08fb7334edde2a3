"""
With these settings, tests run faster.
"""

from .base import *  # noqa: F403
from .base import TEMPLATES
from .base import env

# GENERAL
# ------------------------------------------------------------------------------
# https://docs.djangoproject.com/en/dev/ref/settings/#secret-key
SECRET_KEY = env(
    "DJANGO_SECRET_KEY",
    default="W3m6cLq0iZqVn8JcT1yAbq4eHk7RfXo2sUd5GtPz9NhEv0KwY",
)
# https://docs.djangoproject.com/en/dev/ref/settings/#test-runner
TEST_RUNNER = "django.test.runner.DiscoverRunner"

# DEBUGGING FOR TEMPLATES
# ------------------------------------------------------------------------------
TEMPLATES[0]["OPTIONS"]["debug"] = True  # type: ignore[index]

# Time-coding QKD
# ------------------------------------------------------------------------------
# tests pass tmp_path explicitly; this keeps stray writes out of the checkout
QKD_OUTPUT_DIR = "/tmp/timecoding-qkd-test-artifacts"
QKD_DEFAULT_JOBS = 1
