"""
Run configuration of an experiment.

A run configuration is a flat set of dotted keys whose last component carries
the unit of the value::

    # detector of the key arm
    detector.dark_rate_per_s = 110
    detector.dead_time_ns = 50
    protocol.period_ns = 100

The same keys can be given as JSON, either flat or nested by section, and
overridden from the environment with ``QKD__DETECTOR__DARK_RATE_PER_S=120``.
Values keep the unit they were written in; they are converted to SI only
when the domain objects are built, so that a parsed file serializes back to
the same values.
"""

import json
import logging
import math
from collections.abc import Iterable
from collections.abc import Mapping
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from pathlib import Path
from typing import Any
from typing import Dict
from typing import List
from typing import Optional
from typing import Tuple

import environ
import numpy as np

from .alignment import AlignmentSearch
from .attacks import AttackStrategy
from .attacks import MaxCoherence
from .attacks import NoAttack
from .attacks import TwoSlot
from .coherence import DEFAULT_INSERTION_TRANSMISSION
from .coherence import DEFAULT_VISIBILITY
from .coherence import THEORETICAL_GAMMA
from .coherence import InterferometerModel
from .entangle_opt import OptimizerConfig
from .exceptions import ConfigError
from .exceptions import ValidationError
from .pulse import FITTED_BACKGROUND
from .pulse import FITTED_ORDER
from .pulse import PulseProfile
from .pulse import SlotGrid
from .simulate import ClockModel
from .simulate import DetectorModel
from .simulate import ProtocolParams
from .units import db_to_ratio
from .units import split_unit
from .units import to_si

logger = logging.getLogger(__name__)

DEFAULT_ENV_PREFIX = "QKD__"
TIME_UNITS = ("ns", "us", "ms", "s")


def _dimension(unit: Optional[str]) -> Optional[str]:
    return "time" if unit in TIME_UNITS else unit


@dataclass(frozen=True)
class ConfigField:
    section: str
    quantity: str
    default: Any
    unit: Optional[str] = None
    kind: str = "float"
    choices: Tuple[str, ...] = ()

    @property
    def key(self) -> str:
        return f"{self.section}.{self.quantity}"


def _f(section, quantity, default, unit=None, kind="float", choices=()):
    return ConfigField(section, quantity, default, unit, kind, tuple(choices))


SCHEMA: Tuple[ConfigField, ...] = (
    _f("protocol", "period", 100.0, "ns"),
    _f("protocol", "slot_duration", 10.0, "ns"),
    _f("protocol", "bit1_delay", 10.0, "ns"),
    _f("protocol", "mean_photon_number", 0.1),
    _f("protocol", "pulses_per_sequence", 32000, kind="int"),
    _f("protocol", "sequence_count", 290, kind="int"),
    _f("protocol", "inter_sequence_gap", 5.0, "ms"),
    _f("protocol", "extinction_ratio", 1e-3),
    _f("protocol", "line_attenuation", 0.0, "db"),
    _f("profile", "shape", "hypergaussian", kind="str", choices=("hypergaussian", "square")),
    _f("profile", "fwhm", 18.7, "ns"),
    _f("profile", "order", FITTED_ORDER, kind="int"),
    _f("profile", "background", FITTED_BACKGROUND),
    _f("profile", "window", 100.0, "ns"),
    _f("profile", "quadrature_step", 0.01, "ns"),
    _f("detector", "efficiency", 0.5),
    _f("detector", "dead_time", 50.0, "ns"),
    _f("detector", "jitter_sigma", 0.35, "ns"),
    _f("detector", "dark_rate", 110.0, "per_s"),
    _f("detector", "parasitic_rate", 1000.0, "per_s"),
    _f("detector", "filter_transmission", 0.5),
    _f("detector", "noise", True, kind="bool"),
    _f("clock", "relative_skew", 5e-5),
    _f("clock", "offset", 120.0, "ns"),
    _f("interferometer", "path_delay", 10.0, "ns"),
    _f("interferometer", "visibility", DEFAULT_VISIBILITY),
    _f("interferometer", "insertion_transmission", DEFAULT_INSERTION_TRANSMISSION),
    _f("interferometer", "count_noise", False, kind="bool"),
    _f("interferometer", "photon_level", False, kind="bool"),
    _f("coherence", "gamma_th", THEORETICAL_GAMMA),
    _f("coherence", "gamma_th_from_profile", False, kind="bool"),
    _f("coherence", "k", 3.0),
    _f("attack", "kind", "none", kind="str", choices=("none", "two_slot", "max_coherence")),
    _f("attack", "m", 0.0),
    _f("attack", "x", 2.0 / 3.0),
    _f("attack", "slot4_policy", 0.5),
    _f("alignment", "enabled", True, kind="bool"),
    _f("alignment", "relative_span", 2e-4),
    _f("alignment", "steps", 41, kind="int"),
    _f("alignment", "quantile", 0.01),
    _f("alignment", "offset_hint", 120.0, "ns"),
    _f("optimizer", "starts", 20, kind="int"),
    _f("optimizer", "max_evaluations", 4000, kind="int"),
    _f("optimizer", "polish_iterations", 200, kind="int"),
    _f("optimizer", "penalty", 1e4),
    _f("optimizer", "qber_tolerance", 1e-4),
    _f("optimizer", "complex_mode", False, kind="bool"),
    _f("optimizer", "symmetric", False, kind="bool"),
    _f("optimizer", "q_min", 0.005),
    _f("optimizer", "q_max", 0.2),
    _f("optimizer", "q_points", 24, kind="int"),
    _f("seeds", "master", 20070101, kind="int"),
    _f("outputs", "directory", "", kind="str"),
    _f("outputs", "format", "csv", kind="str", choices=("csv", "json")),
    _f("security", "deltas", (0.086, 0.061, 0.0), kind="floats"),
    _f("security", "qbers", (0.033, 0.0162), kind="floats"),
    _f(
        "security",
        "attacks",
        ("two_slot", "max_coherence", "improved"),
        kind="strs",
        choices=("two_slot", "max_coherence", "improved", "entangling"),
    ),
    _f("security", "measured_qber", 0.0162),
    _f("security", "range_attack", "max_coherence", kind="str", choices=("two_slot", "max_coherence", "improved")),
    _f("security", "range_delta", 0.0),
    _f("security", "fiber_loss", 2.0, "db_per_km"),
    _f("security", "q_points", 200, kind="int"),
    _f("security", "range_points", 12, kind="int"),
)

FIELDS: Dict[str, ConfigField] = {f.key: f for f in SCHEMA}
SECTIONS = tuple(dict.fromkeys(f.section for f in SCHEMA))


@dataclass(frozen=True)
class ConfigValue:
    value: Any
    unit: Optional[str] = None


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"'{text}' is not a boolean")


def _convert(spec: ConfigField, raw: Any) -> Any:
    """Coerce a text or JSON value to the field's kind."""
    if spec.kind == "float":
        value = float(raw)
        if not math.isfinite(value):
            raise ValueError(f"'{raw}' is not a finite number")
        return value
    if spec.kind == "int":
        if isinstance(raw, float) and not raw.is_integer():
            raise ValueError(f"'{raw}' is not an integer")
        return int(raw)
    if spec.kind == "bool":
        return raw if isinstance(raw, bool) else _parse_bool(str(raw))
    if spec.kind == "str":
        value = str(raw).strip()
        if spec.choices and value not in spec.choices:
            raise ValueError(f"'{value}' is not one of {', '.join(spec.choices)}")
        return value
    items = raw if isinstance(raw, (list, tuple)) else [item for item in str(raw).split(",") if item.strip()]
    if spec.kind == "floats":
        return tuple(float(item) for item in items)
    values = tuple(str(item).strip() for item in items)
    for value in values:
        if spec.choices and value not in spec.choices:
            raise ValueError(f"'{value}' is not one of {', '.join(spec.choices)}")
    return values


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _resolve_key(key: str, line: Optional[int]) -> Tuple[ConfigField, Optional[str]]:
    if key.count(".") != 1:
        raise ConfigError("keys have the form section.name", key=key, line=line)
    section, name = key.split(".")
    if section not in SECTIONS:
        raise ConfigError(f"unknown section '{section}'", key=key, line=line)
    quantity, unit = split_unit(name)
    spec = FIELDS.get(f"{section}.{quantity}")
    if spec is None:
        raise ConfigError("unknown key", key=key, line=line)
    if _dimension(unit) != _dimension(spec.unit):
        expected = f"a unit compatible with '{spec.unit}'" if spec.unit else "no unit suffix"
        raise ConfigError(f"expected {expected}", key=key, line=line)
    return spec, unit


@dataclass(frozen=True)
class RunConfig:
    """
    Validated run configuration.

    ``values`` maps ``section.quantity`` to the value and the unit it was
    written in. Missing keys take their defaults.
    """

    values: Mapping[str, ConfigValue] = field(default_factory=dict)
    source: Optional[str] = None

    # Parsing
    # --------------------------------------------------------------------------

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls()

    @classmethod
    def _from_pairs(cls, pairs: Iterable[Tuple[str, Any, Optional[int]]], source: Optional[str] = None) -> "RunConfig":
        values: Dict[str, ConfigValue] = {}
        seen: Dict[str, Tuple[str, Optional[int]]] = {}
        for key, raw, line in pairs:
            spec, unit = _resolve_key(key, line)
            if spec.key in seen:
                previous, previous_line = seen[spec.key]
                where = f" (line {previous_line})" if previous_line is not None else ""
                if previous != key:
                    raise ConfigError(f"mixed units: '{previous}'{where} sets the same quantity", key=key, line=line)
                raise ConfigError(f"duplicate key, first set{where}", key=key, line=line)
            try:
                value = _convert(spec, raw)
            except (TypeError, ValueError) as e:
                raise ConfigError(str(e), key=key, line=line) from e
            seen[spec.key] = (key, line)
            values[spec.key] = ConfigValue(value, unit)
        return cls(values=values, source=source)

    @classmethod
    def parse(cls, text: str, source: Optional[str] = None) -> "RunConfig":
        """
        Parse the dotted-key text format.

        Raises:
            ConfigError: On malformed lines, unknown keys, bad values or mixed units
        """
        pairs = []
        for number, raw_line in enumerate(text.splitlines(), start=1):
            line = raw_line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("expected 'key = value'", line=number)
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise ConfigError("expected 'key = value'", line=number)
            pairs.append((key, value, number))
        return cls._from_pairs(pairs, source=source)

    @classmethod
    def from_json(cls, text: str, source: Optional[str] = None) -> "RunConfig":
        try:
            document = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e.msg}", line=e.lineno) from e
        if not isinstance(document, dict):
            raise ConfigError("the JSON document must be an object")
        pairs = []
        for key, value in document.items():
            if isinstance(value, dict):
                pairs.extend((f"{key}.{name}", inner, None) for name, inner in value.items())
            else:
                pairs.append((key, value, None))
        return cls._from_pairs(pairs, source=source)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        text = path.read_text(encoding="utf-8")
        if path.suffix.lower() == ".json":
            return cls.from_json(text, source=str(path))
        return cls.parse(text, source=str(path))

    def with_overrides(self, overrides: Mapping[str, Any]) -> "RunConfig":
        """Replace values; an override may use a different unit than the key it replaces."""
        override = self._from_pairs((key, value, None) for key, value in overrides.items())
        merged = dict(self.values)
        merged.update(override.values)
        return replace(self, values=merged)

    def with_env(self, source: Optional[Mapping[str, str]] = None, prefix: str = DEFAULT_ENV_PREFIX) -> "RunConfig":
        """Apply ``PREFIX_SECTION__NAME=value`` overrides from the environment (or ``source``)."""
        env = environ.Env()
        if source is not None:
            env.ENVIRON = source
        overrides = {}
        for name in sorted(env.ENVIRON):
            if name.startswith(prefix):
                key = name[len(prefix) :].lower().replace("__", ".")
                overrides[key] = env.str(name)
        if overrides:
            logger.info(f"Config overrides from environment: {', '.join(sorted(overrides))}")
        return self.with_overrides(overrides)

    # Access
    # --------------------------------------------------------------------------

    def entry(self, key: str) -> ConfigValue:
        spec = FIELDS.get(key)
        if spec is None:
            raise ConfigError("unknown key", key=key)
        return self.values.get(key, ConfigValue(spec.default, spec.unit))

    def get(self, key: str) -> Any:
        return self.entry(key).value

    def si(self, key: str) -> float:
        entry = self.entry(key)
        return to_si(entry.value, entry.unit)

    # Serialization
    # --------------------------------------------------------------------------

    def _items(self) -> List[Tuple[str, Any]]:
        items = []
        for spec in SCHEMA:
            entry = self.entry(spec.key)
            name = spec.quantity if entry.unit is None else f"{spec.quantity}_{entry.unit}"
            items.append((f"{spec.section}.{name}", entry.value))
        return items

    def serialize(self) -> str:
        """Complete config in the text format; parsing it gives back the same values."""
        lines = []
        section = None
        for key, value in self._items():
            current = key.split(".")[0]
            if current != section:
                if section is not None:
                    lines.append("")
                lines.append(f"# {current}")
                section = current
            lines.append(f"{key} = {_format(value)}")
        return "\n".join(lines) + "\n"

    def as_dict(self) -> Dict[str, Any]:
        return {key: list(value) if isinstance(value, tuple) else value for key, value in self._items()}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    # Domain objects
    # --------------------------------------------------------------------------

    def _build(self, section: str, factory, **kwargs):
        try:
            return factory(**kwargs)
        except ValidationError as e:
            raise ConfigError(e.message, key=section) from e

    def grid(self) -> SlotGrid:
        slot = self.si("protocol.slot_duration")
        return self._build(
            "protocol",
            SlotGrid,
            slot_duration=slot,
            pulse_duration=2 * slot,
            period=self.si("protocol.period"),
            bit0_delay=0.0,
            bit1_delay=self.si("protocol.bit1_delay"),
        )

    def profile(self) -> PulseProfile:
        """Hyper-Gaussian from the fwhm/order/background keys, or the ideal square of the grid's pulse duration."""
        common = {
            "normalization_window": self.si("profile.window"),
            "quadrature_step": self.si("profile.quadrature_step"),
        }
        if self.get("profile.shape") == "square":
            return self._build("profile", PulseProfile.square, width=self.grid().pulse_duration, **common)
        return self._build(
            "profile",
            PulseProfile.from_fwhm,
            fwhm=self.si("profile.fwhm"),
            order=self.get("profile.order"),
            background=self.get("profile.background"),
            **common,
        )

    def protocol(self) -> ProtocolParams:
        grid = self.grid()
        pulses = self.get("protocol.pulses_per_sequence")
        return self._build(
            "protocol",
            ProtocolParams,
            grid=grid,
            mean_photons_per_pulse=self.get("protocol.mean_photon_number"),
            pulses_per_sequence=pulses,
            sequence_duration=pulses * grid.period,
            inter_sequence_gap=self.si("protocol.inter_sequence_gap"),
            extinction_ratio=self.get("protocol.extinction_ratio"),
            sequence_count=self.get("protocol.sequence_count"),
            channel_transmission=1 / db_to_ratio(self.get("protocol.line_attenuation")),
        )

    def detector(self) -> DetectorModel:
        detector = self._build(
            "detector",
            DetectorModel,
            efficiency=self.get("detector.efficiency"),
            dead_time=self.si("detector.dead_time"),
            jitter_sigma=self.si("detector.jitter_sigma"),
            dark_rate=self.si("detector.dark_rate"),
            parasitic_rate=self.si("detector.parasitic_rate"),
            filter_transmission=self.get("detector.filter_transmission"),
        )
        return detector if self.get("detector.noise") else detector.noiseless()

    def clock(self) -> ClockModel:
        return self._build(
            "clock",
            ClockModel,
            relative_skew=self.get("clock.relative_skew"),
            offset=self.si("clock.offset"),
        )

    def interferometer(self) -> InterferometerModel:
        return self._build(
            "interferometer",
            InterferometerModel,
            path_delay=self.si("interferometer.path_delay"),
            intrinsic_visibility=self.get("interferometer.visibility"),
            insertion_transmission=self.get("interferometer.insertion_transmission"),
            count_dark_events=self.get("interferometer.count_noise"),
        )

    def attack(self) -> AttackStrategy:
        kind = self.get("attack.kind")
        if kind == "two_slot":
            return self._build("attack", TwoSlot, m=self.get("attack.m"), slot4_policy=self.get("attack.slot4_policy"))
        if kind == "max_coherence":
            return self._build("attack", MaxCoherence, m=self.get("attack.m"), x=self.get("attack.x"))
        return NoAttack()

    def alignment(self) -> AlignmentSearch:
        return AlignmentSearch(
            relative_span=self.get("alignment.relative_span"),
            steps=self.get("alignment.steps"),
            quantile=self.get("alignment.quantile"),
            offset_hint=self.si("alignment.offset_hint"),
        )

    def optimizer(self) -> OptimizerConfig:
        return self._build(
            "optimizer",
            OptimizerConfig,
            starts=self.get("optimizer.starts"),
            max_evaluations=self.get("optimizer.max_evaluations"),
            polish_iterations=self.get("optimizer.polish_iterations"),
            penalty=self.get("optimizer.penalty"),
            qber_tolerance=self.get("optimizer.qber_tolerance"),
            complex_mode=self.get("optimizer.complex_mode"),
            symmetric=self.get("optimizer.symmetric"),
            seed=self.get("seeds.master"),
        )

    def optimizer_grid(self) -> np.ndarray:
        return np.linspace(self.get("optimizer.q_min"), self.get("optimizer.q_max"), self.get("optimizer.q_points"))

    @property
    def master_seed(self) -> int:
        return self.get("seeds.master")
