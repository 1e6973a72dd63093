"""Shared domain types for the assembly-line anomaly prediction pipeline.

Everything downstream (generation, ingest, training, evaluation, streaming)
speaks in terms of these types. All of them are immutable after construction
and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Sequence

#: Cycle states at which camera images exist and the fused path is eligible.
FUSION_STATES = (4, 9)

N_STATES = 21


class AnomalyClass(Enum):
    """The seven anomaly classes of the assembly line, in canonical order.

    Each compound label ("NoNose+NoBody2") is one atomic class, not a set.
    The enum value is the ordinal used by the numeric label codec.
    """

    NO_ANOMALY = 0
    NO_BODY1 = 1
    NO_NOSE = 2
    NO_NOSE_NO_BODY2 = 3
    NO_NOSE_NO_BODY2_NO_BODY1 = 4
    NO_BODY2 = 5
    NO_BODY2_NO_BODY1 = 6

    @property
    def ordinal(self) -> int:
        return self.value

    @property
    def label(self) -> str:
        return _CLASS_LABELS[self]

    @classmethod
    def from_ordinal(cls, ordinal: int) -> "AnomalyClass":
        return cls(ordinal)

    @classmethod
    def from_label(cls, text: str) -> "AnomalyClass":
        """Parse a canonical label. Accepts '+' or ',' separators and spaces."""
        key = text.replace(" ", "").replace(",", "+")
        try:
            return _LABEL_TO_CLASS[key]
        except KeyError:
            raise ValueError(f"unknown anomaly label: {text!r}") from None


_CLASS_LABELS = {
    AnomalyClass.NO_ANOMALY: "NoAnomaly",
    AnomalyClass.NO_BODY1: "NoBody1",
    AnomalyClass.NO_NOSE: "NoNose",
    AnomalyClass.NO_NOSE_NO_BODY2: "NoNose+NoBody2",
    AnomalyClass.NO_NOSE_NO_BODY2_NO_BODY1: "NoNose+NoBody2+NoBody1",
    AnomalyClass.NO_BODY2: "NoBody2",
    AnomalyClass.NO_BODY2_NO_BODY1: "NoBody2+NoBody1",
}

_LABEL_TO_CLASS = {label: cls for cls, label in _CLASS_LABELS.items()}


@dataclass(frozen=True, order=True)
class CycleState:
    """One of the 21 phases of an assembly cycle."""

    index: int

    def __post_init__(self):
        if not 1 <= self.index <= N_STATES:
            raise ValueError(f"cycle state index must be in [1, {N_STATES}], got {self.index}")

    @property
    def is_fusion_state(self) -> bool:
        return self.index in FUSION_STATES


@dataclass(frozen=True)
class SensorRange:
    """Closed acceptable interval [min, max] for one sensor."""

    sensor_id: str
    min: float
    max: float

    def __post_init__(self):
        if self.min > self.max:
            raise ValueError(f"range for {self.sensor_id}: min {self.min} > max {self.max}")

    def contains(self, value: float) -> bool:
        return self.min <= value <= self.max

    @property
    def width(self) -> float:
        return self.max - self.min


@dataclass(frozen=True)
class MultimodalSample:
    """One timestep: sensor vector, label, position in the cycle, optional image.

    The steady-state contract is that ``image_ref`` is only set at fusion
    states (4 and 9); ingest intermediates may carry camera paths everywhere
    until ``filter_fusion_images`` runs, so this is checked at the dataset
    level (`check_fusion_image_invariant`) rather than at construction.
    """

    cycle_id: int
    state: CycleState
    step: int
    sensors: tuple[float, ...]
    label: AnomalyClass
    image_ref: str | None = None

    def __post_init__(self):
        if self.cycle_id < 1:
            raise ValueError("cycle_id must be >= 1")
        if self.step < 0:
            raise ValueError("step must be >= 0")

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.cycle_id, self.state.index, self.step)


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of samples with a fixed sensor schema."""

    samples: tuple[MultimodalSample, ...]
    sensor_names: tuple[str, ...]
    sampling_rate_hz: float = 1.95

    def __post_init__(self):
        if self.sampling_rate_hz <= 0:
            raise ValueError("sampling_rate_hz must be > 0")
        m = len(self.sensor_names)
        prev_key = None
        for s in self.samples:
            if len(s.sensors) != m:
                raise ValueError(
                    f"sample {s.key} has {len(s.sensors)} sensors, schema has {m}"
                )
            if prev_key is not None and s.key <= prev_key:
                raise ValueError(f"samples out of order or duplicated at key {s.key}")
            prev_key = s.key

    def __len__(self) -> int:
        return len(self.samples)

    def cycle_ids(self) -> list[int]:
        seen: dict[int, None] = {}
        for s in self.samples:
            seen.setdefault(s.cycle_id, None)
        return list(seen)

    def runs(self) -> Iterator[list[MultimodalSample]]:
        """Yield maximal consecutive (cycle, state) runs in order."""
        run: list[MultimodalSample] = []
        for s in self.samples:
            if run and (s.cycle_id, s.state) != (run[0].cycle_id, run[0].state):
                yield run
                run = []
            run.append(s)
        if run:
            yield run

    def subset_by_cycles(self, cycle_ids: set[int]) -> "Dataset":
        return Dataset(
            samples=tuple(s for s in self.samples if s.cycle_id in cycle_ids),
            sensor_names=self.sensor_names,
            sampling_rate_hz=self.sampling_rate_hz,
        )


def check_fusion_image_invariant(ds: Dataset) -> bool:
    """True if image refs appear only at fusion states (the steady-state contract)."""
    return all(
        s.image_ref is None or s.state.index in FUSION_STATES for s in ds.samples
    )


@dataclass(frozen=True)
class PredictionRecord:
    """A model's next-step prediction for one timestep, ready for ontology checks."""

    cycle_id: int
    state: CycleState
    step: int
    sensor_ids: tuple[str, ...]
    predicted_sensors: tuple[float, ...]
    predicted_class: AnomalyClass
    used_image: bool = False
    image_fallback: bool = False


def encode_anomaly_label(label: AnomalyClass) -> float:
    """Numeric (ordinal) encoding of an anomaly class, used as a model channel."""
    return float(label.ordinal)


def decode_anomaly_value(value: float) -> AnomalyClass:
    """Classify a real-valued anomaly channel back to a class.

    Rounds to the nearest ordinal (ties away from zero) and clamps to [0, 6].
    """
    if not math.isfinite(value):
        raise ValueError(f"anomaly value must be finite, got {value}")
    rounded = math.floor(value + 0.5) if value >= 0 else math.ceil(value - 0.5)
    clamped = min(max(rounded, 0), len(AnomalyClass) - 1)
    return AnomalyClass(clamped)
