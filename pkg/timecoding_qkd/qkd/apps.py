from django.apps import AppConfig
from django.utils.translation import gettext_lazy as _


class QkdConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "timecoding_qkd.qkd"
    verbose_name = _("Time-coding QKD")
