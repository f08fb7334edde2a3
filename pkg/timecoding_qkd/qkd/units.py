"""
Unit constants and unit-suffixed configuration keys.

All quantities are handled internally in SI units. Configuration keys carry
their unit as a suffix (``protocol.period_ns``, ``detector.dark_rate_per_s``)
and are converted here.
"""

import math

NS = 1e-9
US = 1e-6
MS = 1e-3
S = 1.0
KM = 1.0

# suffix -> factor to SI
UNIT_SUFFIXES = {
    "ns": NS,
    "us": US,
    "ms": MS,
    "s": S,
    "per_s": 1.0,
    "db_per_km": 1.0,
    "db": 1.0,
    "km": KM,
    "rad": 1.0,
}


def split_unit(name: str) -> tuple[str, str | None]:
    """
    Split a config field name into its quantity and unit suffix.

    Args:
        name: Field name such as ``dead_time_ns`` or ``dark_rate_per_s``

    Returns:
        Tuple of (quantity, suffix); suffix is None for dimensionless fields
    """
    # longest suffix first so "db_per_km" wins over "km"
    for suffix in sorted(UNIT_SUFFIXES, key=len, reverse=True):
        if name.endswith("_" + suffix):
            return name[: -len(suffix) - 1], suffix
    return name, None


def to_si(value: float, suffix: str | None) -> float:
    if suffix is None:
        return value
    return value * UNIT_SUFFIXES[suffix]


def from_si(value: float, suffix: str | None) -> float:
    if suffix is None:
        return value
    return value / UNIT_SUFFIXES[suffix]


def db_to_ratio(db: float) -> float:
    return 10.0 ** (db / 10.0)


def ratio_to_db(ratio: float) -> float:
    return 10.0 * math.log10(ratio)
