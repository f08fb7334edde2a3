from .base import *  # noqa: F403
from .base import LOGGING
from .base import env

# GENERAL
# ------------------------------------------------------------------------------
# https://docs.djangoproject.com/en/dev/ref/settings/#debug
DEBUG = True
# https://docs.djangoproject.com/en/dev/ref/settings/#secret-key
# No web surface uses it; Django only requires it to be set.
SECRET_KEY = env("DJANGO_SECRET_KEY", default="timecoding-qkd-local")

# LOGGING
# ------------------------------------------------------------------------------
LOGGING["loggers"]["timecoding_qkd"]["level"] = env("QKD_LOG_LEVEL", default="DEBUG")  # type: ignore[index]
