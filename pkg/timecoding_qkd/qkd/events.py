"""
Columnar containers for photons and detections.

A sequence produces tens of thousands of photons, so both containers keep
one numpy array per field. ``DetectionRecords`` still iterates as plain
``DetectionRecord`` values for code that wants one record at a time.
"""

from collections.abc import Iterator
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import fields
from dataclasses import replace
from enum import IntEnum

import numpy as np

from .exceptions import ValidationError

OUTSIDE = 0
NO_PULSE = -1


class Origin(IntEnum):
    """Simulation-truth tag of a photon or detection."""

    SIGNAL = 0
    BACKGROUND = 1
    DARK = 2
    PARASITIC = 3
    RESENT = 4

    @property
    def label(self) -> str:
        return self.name.lower()


def slot_label(slot: int) -> str:
    return "outside" if slot == OUTSIDE else str(int(slot))


def _check_lengths(obj) -> None:
    sizes = {f.name: len(getattr(obj, f.name)) for f in fields(obj)}
    if len(set(sizes.values())) > 1:
        raise ValidationError(f"{type(obj).__name__} columns differ in length: {sizes}")


@dataclass(frozen=True, eq=False)
class PhotonEvents:
    """
    Photons of one sequence, in Alice's time frame.

    ``amplitudes`` and ``base_slot`` describe photons resent by Eve: the three
    amplitudes sit on slots ``base_slot``, ``base_slot + 1`` and
    ``base_slot + 2``. Photons straight from the source have ``base_slot`` 0
    and follow the pulse profile instead.
    """

    times: np.ndarray
    pulse_index: np.ndarray
    origin: np.ndarray
    base_slot: np.ndarray
    amplitudes: np.ndarray
    eve_slot: np.ndarray

    def __post_init__(self):
        _check_lengths(self)

    def __len__(self) -> int:
        return int(self.times.size)

    @classmethod
    def build(
        cls,
        times: np.ndarray,
        pulse_index: np.ndarray,
        origin: np.ndarray | int,
        base_slot: np.ndarray | None = None,
        amplitudes: np.ndarray | None = None,
        eve_slot: np.ndarray | None = None,
    ) -> "PhotonEvents":
        n = len(times)
        return cls(
            times=np.asarray(times, dtype=float),
            pulse_index=np.asarray(pulse_index, dtype=np.int64),
            origin=np.broadcast_to(np.asarray(origin, dtype=np.int8), (n,)).copy(),
            base_slot=np.zeros(n, dtype=np.int8) if base_slot is None else np.asarray(base_slot, dtype=np.int8),
            amplitudes=np.zeros((n, 3)) if amplitudes is None else np.asarray(amplitudes, dtype=float).reshape(n, 3),
            eve_slot=np.zeros(n, dtype=np.int8) if eve_slot is None else np.asarray(eve_slot, dtype=np.int8),
        )

    @classmethod
    def empty(cls) -> "PhotonEvents":
        return cls.build(np.empty(0), np.empty(0, dtype=np.int64), Origin.SIGNAL)

    def select(self, mask: np.ndarray) -> "PhotonEvents":
        return type(self)(**{f.name: getattr(self, f.name)[mask] for f in fields(self)})

    def sorted(self) -> "PhotonEvents":
        order = np.argsort(self.times, kind="stable")
        return self.select(order)

    @classmethod
    def concatenate(cls, parts: Sequence["PhotonEvents"]) -> "PhotonEvents":
        if not parts:
            return cls.empty()
        return cls(**{f.name: np.concatenate([getattr(p, f.name) for p in parts]) for f in fields(cls)})

    def count(self, origin: Origin) -> int:
        return int(np.count_nonzero(self.origin == origin))


@dataclass(frozen=True)
class DetectionRecord:
    sequence_index: int
    raw_time: float
    pulse_index: int
    slot: int
    origin: Origin

    @property
    def slot_label(self) -> str:
        return slot_label(self.slot)


@dataclass(frozen=True, eq=False)
class DetectionRecords:
    """
    Key-arm detections, pooled over any number of sequences.

    ``raw_time`` is Bob's clock reading measured from the start of the
    sequence. ``pulse_index`` and ``slot`` are filled by slot assignment after
    clock alignment. ``source_pulse`` keeps the true pulse of the photon and is
    never read by the estimators.
    """

    sequence_index: np.ndarray
    raw_time: np.ndarray
    pulse_index: np.ndarray
    slot: np.ndarray
    origin: np.ndarray
    source_pulse: np.ndarray

    def __post_init__(self):
        _check_lengths(self)

    def __len__(self) -> int:
        return int(self.raw_time.size)

    def __iter__(self) -> Iterator[DetectionRecord]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> DetectionRecord:
        return DetectionRecord(
            sequence_index=int(self.sequence_index[i]),
            raw_time=float(self.raw_time[i]),
            pulse_index=int(self.pulse_index[i]),
            slot=int(self.slot[i]),
            origin=Origin(int(self.origin[i])),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DetectionRecords):
            return NotImplemented
        return all(np.array_equal(getattr(self, f.name), getattr(other, f.name)) for f in fields(self))

    __hash__ = None  # type: ignore[assignment]

    @classmethod
    def build(
        cls,
        raw_time: np.ndarray,
        origin: np.ndarray,
        source_pulse: np.ndarray,
        sequence_index: int = 0,
    ) -> "DetectionRecords":
        n = len(raw_time)
        return cls(
            sequence_index=np.full(n, sequence_index, dtype=np.int64),
            raw_time=np.asarray(raw_time, dtype=float),
            pulse_index=np.full(n, NO_PULSE, dtype=np.int64),
            slot=np.full(n, OUTSIDE, dtype=np.int8),
            origin=np.asarray(origin, dtype=np.int8),
            source_pulse=np.asarray(source_pulse, dtype=np.int64),
        )

    @classmethod
    def empty(cls) -> "DetectionRecords":
        return cls.build(np.empty(0), np.empty(0, dtype=np.int8), np.empty(0, dtype=np.int64))

    @classmethod
    def concatenate(cls, parts: Sequence["DetectionRecords"]) -> "DetectionRecords":
        if not parts:
            return cls.empty()
        return cls(**{f.name: np.concatenate([getattr(p, f.name) for p in parts]) for f in fields(cls)})

    def select(self, mask: np.ndarray) -> "DetectionRecords":
        return type(self)(**{f.name: getattr(self, f.name)[mask] for f in fields(self)})

    def with_assignment(self, pulse_index: np.ndarray, slot: np.ndarray) -> "DetectionRecords":
        return replace(
            self,
            pulse_index=np.asarray(pulse_index, dtype=np.int64),
            slot=np.asarray(slot, dtype=np.int8),
        )

    def count(self, origin: Origin) -> int:
        return int(np.count_nonzero(self.origin == origin))
