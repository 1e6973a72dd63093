"""Synthetic assembly-cycle generator for desk-scale experiments.

The generator is engineered so that the anomaly signal is split between
modalities. A faulty cycle is missing one or more rocket parts for its whole
duration, and the camera frames at the fusion states (4 and 9) always show
the true part configuration. The electrical signature of the fault, however,
is intermittent: inside the states where a fault class is valid, only every
other step carries the anomalous label and the out-of-range sensor readings,
while the steps in between look nominal. A memoryless next-step model that
sees only the current sensor vector and label therefore cannot tell an
about-to-manifest faulty cycle from a healthy one; the image can.

Nominal sensor traces follow a per-state baseline plus a within-state ramp,
so the position inside a state is recoverable from the sensor values alone.
All randomness is driven by seeds derived from (config seed, cycle, ...),
which makes generation byte-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import (
    FUSION_STATES,
    N_STATES,
    AnomalyClass,
    CycleState,
    Dataset,
    MultimodalSample,
    SensorRange,
)
from .ontology import (
    AnomalyValidity,
    OntologyEntity,
    ProcessOntology,
    Relation,
    StateBinding,
    expected_range,
    make_ontology,
)

#: Parts removed by each anomaly class (Figure-level semantics of the labels).
MISSING_PARTS: dict[AnomalyClass, frozenset[str]] = {
    AnomalyClass.NO_ANOMALY: frozenset(),
    AnomalyClass.NO_BODY1: frozenset({"body1"}),
    AnomalyClass.NO_NOSE: frozenset({"nose"}),
    AnomalyClass.NO_NOSE_NO_BODY2: frozenset({"nose", "body2"}),
    AnomalyClass.NO_NOSE_NO_BODY2_NO_BODY1: frozenset({"nose", "body2", "body1"}),
    AnomalyClass.NO_BODY2: frozenset({"body2"}),
    AnomalyClass.NO_BODY2_NO_BODY1: frozenset({"body2", "body1"}),
}

#: Sensor column watching each part. body1 has no electrical signature at all:
#: it is only observable in the camera frames, which is what makes the image
#: modality carry information the time series cannot.
PART_SENSOR: dict[str, int] = {"nose": 0, "body2": 1}

#: States in which each fault class manifests (and is valid per the ontology).
#: NoNose can only occur from state 8 on; classes involving body1 surface at
#: the fusion states, body2-only classes at the stacking state 6 and state 9.
CLASS_VALID_STATES: dict[AnomalyClass, frozenset[int]] = {
    AnomalyClass.NO_BODY1: frozenset({4, 9}),
    AnomalyClass.NO_NOSE: frozenset({8, 9}),
    AnomalyClass.NO_NOSE_NO_BODY2: frozenset({6, 9}),
    AnomalyClass.NO_NOSE_NO_BODY2_NO_BODY1: frozenset({4, 9}),
    AnomalyClass.NO_BODY2: frozenset({6, 9}),
    AnomalyClass.NO_BODY2_NO_BODY1: frozenset({4, 9}),
}

#: Anomaly mix of the reference multimodal dataset (time-series side).
DEFAULT_ANOMALY_MIX: dict[AnomalyClass, float] = {
    AnomalyClass.NO_ANOMALY: 90844 / 166001,
    AnomalyClass.NO_BODY1: 1849 / 166001,
    AnomalyClass.NO_NOSE: 19307 / 166001,
    AnomalyClass.NO_NOSE_NO_BODY2: 25206 / 166001,
    AnomalyClass.NO_NOSE_NO_BODY2_NO_BODY1: 26628 / 166001,
    AnomalyClass.NO_BODY2: 1078 / 166001,
    AnomalyClass.NO_BODY2_NO_BODY1: 1089 / 166001,
}

# Nominal trace parameters (raw sensor units).
BASE_SENSOR_OFFSET = 1000.0  # sensor l baseline starts at 1000*(l+1)
BASE_STATE_STEP = 50.0  # baseline shift between consecutive states
RAMP_PER_STEP = 10.0  # within-state ramp, larger than the noise span
NOISE_HALF_SPAN = 2.0  # uniform sensor noise, bounded so ranges always hold
RANGE_MARGIN = 8.0  # expected-range slack around the nominal trace
DEVIATION_GAP = 30.0  # minimum distance below range min for faulty readings
DEVIATION_JITTER = 20.0  # extra random drop on top of the gap
GLOBAL_MARGIN = 100.0  # global sensor bounds slack beyond all state ranges

SAMPLING_RATE_HZ = 1.95


@dataclass(frozen=True)
class GenConfig:
    """Parameters of one synthetic dataset."""

    n_cycles: int
    m_sensors: int = 3
    steps_per_state: int = 6
    anomaly_mix: Mapping[AnomalyClass, float] = field(
        default_factory=lambda: dict(DEFAULT_ANOMALY_MIX)
    )
    image_size: int = 32
    image_signal_strength: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.n_cycles < 2:
            raise ValueError("n_cycles must be >= 2")
        if self.m_sensors < 2:
            raise ValueError("m_sensors must be >= 2")
        if self.steps_per_state < 1:
            raise ValueError("steps_per_state must be >= 1")
        if self.image_size < 8:
            raise ValueError("image_size must be >= 8")
        if not 0.0 <= self.image_signal_strength <= 1.0:
            raise ValueError("image_signal_strength must be in [0, 1]")
        total = sum(self.anomaly_mix.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"anomaly_mix must sum to 1, got {total}")
        if any(p < 0 for p in self.anomaly_mix.values()):
            raise ValueError("anomaly_mix probabilities must be non-negative")
        for key in self.anomaly_mix:
            if not isinstance(key, AnomalyClass):
                raise ValueError(f"anomaly_mix key {key!r} is not an AnomalyClass")


@dataclass(frozen=True)
class SyntheticImage:
    """A rendered camera frame for a fusion state."""

    pixels: np.ndarray  # (size, size, 3) floats in [0, 1]
    state: CycleState
    truth_label: AnomalyClass


def sensor_names(m: int) -> tuple[str, ...]:
    return tuple(f"sensor_{l + 1}" for l in range(m))


def nominal_base(sensor_index: int, state_index: int) -> float:
    return BASE_SENSOR_OFFSET * (sensor_index + 1) + BASE_STATE_STEP * state_index


def state_range(sensor_index: int, state_index: int, steps_per_state: int) -> tuple[float, float]:
    base = nominal_base(sensor_index, state_index)
    return (
        base - RANGE_MARGIN,
        base + RAMP_PER_STEP * (steps_per_state - 1) + RANGE_MARGIN,
    )


def designated_sensors(cls: AnomalyClass, m_sensors: int) -> tuple[int, ...]:
    """Sensor columns perturbed by a class; empty for image-only classes."""
    cols = sorted(
        PART_SENSOR[p] for p in MISSING_PARTS[cls] if p in PART_SENSOR
    )
    return tuple(c for c in cols if c < m_sensors)


def synthetic_ontology(cfg: GenConfig) -> ProcessOntology:
    """Ontology matching the generator: ranges per (sensor, state) plus validities."""
    names = sensor_names(cfg.m_sensors)
    entities = []
    bindings = []
    for l, name in enumerate(names):
        lo = nominal_base(l, 1) - GLOBAL_MARGIN
        hi = (
            nominal_base(l, N_STATES)
            + RAMP_PER_STEP * (cfg.steps_per_state - 1)
            + GLOBAL_MARGIN
        )
        entities.append(
            OntologyEntity(
                id=name,
                kind="sensor",
                properties={"units": "unit", "min": lo, "max": hi},
            )
        )
        for s in range(1, N_STATES + 1):
            rlo, rhi = state_range(l, s, cfg.steps_per_state)
            bindings.append(
                StateBinding(
                    entity_id=name,
                    state=CycleState(s),
                    function=f"tracks channel {l + 1} during state {s}",
                    expected_range=SensorRange(name, rlo, rhi),
                )
            )
    robots = {
        "R01": (4, "places rocket body 1 on the carrier"),
        "R02": (6, "stacks rocket body 2"),
        "R03": (8, "places the nose cone"),
        "R04": (9, "presents the assembly to the inspection cameras"),
    }
    relations = []
    for rid, (state, function) in robots.items():
        entities.append(OntologyEntity(id=rid, kind="robot", properties={}))
        bindings.append(StateBinding(entity_id=rid, state=CycleState(state), function=function))
        relations.append(Relation(rid, "active_in", f"state:{state}"))
    validities = [
        AnomalyValidity(anomaly=cls, valid_states=states)
        for cls, states in CLASS_VALID_STATES.items()
    ]
    return make_ontology(entities, bindings, validities, relations)


def _cycle_classes(cfg: GenConfig) -> list[AnomalyClass]:
    """Assign one class per cycle by largest-remainder quota, then shuffle.

    Quota assignment keeps the realized mix exactly proportional (up to whole
    cycles), which both stabilizes small runs and keeps stratified splitting
    feasible.
    """
    classes = sorted(cfg.anomaly_mix, key=lambda c: c.ordinal)
    exact = {c: cfg.anomaly_mix[c] * cfg.n_cycles for c in classes}
    counts = {c: int(np.floor(exact[c])) for c in classes}
    short = cfg.n_cycles - sum(counts.values())
    by_remainder = sorted(classes, key=lambda c: (-(exact[c] - counts[c]), c.ordinal))
    for c in by_remainder[:short]:
        counts[c] += 1
    assignment = [c for c in classes for _ in range(counts[c])]
    rng = np.random.default_rng([cfg.seed, 0xC1A55])
    rng.shuffle(assignment)
    return assignment


def image_ref(cycle_id: int, state_index: int, step: int) -> str:
    return f"images/c{cycle_id:05d}_s{state_index:02d}_k{step:03d}.png"


def _nominal_cycle(cfg: GenConfig, cycle_id: int) -> list[MultimodalSample]:
    rng = np.random.default_rng([cfg.seed, cycle_id, 0])
    samples = []
    for s in range(1, N_STATES + 1):
        for k in range(cfg.steps_per_state):
            values = tuple(
                float(
                    nominal_base(l, s)
                    + RAMP_PER_STEP * k
                    + rng.uniform(-NOISE_HALF_SPAN, NOISE_HALF_SPAN)
                )
                for l in range(cfg.m_sensors)
            )
            ref = image_ref(cycle_id, s, k) if s in FUSION_STATES else None
            samples.append(
                MultimodalSample(
                    cycle_id=cycle_id,
                    state=CycleState(s),
                    step=k,
                    sensors=values,
                    label=AnomalyClass.NO_ANOMALY,
                    image_ref=ref,
                )
            )
    return samples


def _manifest_steps(steps_per_state: int) -> range:
    return range(1, steps_per_state, 2)


def inject_anomaly(
    cycle_samples: Sequence[MultimodalSample],
    cls: AnomalyClass,
    onto: ProcessOntology,
    seed,
) -> list[MultimodalSample]:
    """Stamp one fault class onto a nominal cycle.

    Inside the class's valid states, every other step carries the anomalous
    label with the class-designated sensors pushed below their expected range;
    states before the class's first valid state are untouched. Image-only
    classes (no designated sensors) only flip labels.
    """
    if cls is AnomalyClass.NO_ANOMALY:
        raise ValueError("cannot inject NoAnomaly")
    validity = next((v for v in onto.validities if v.anomaly is cls), None)
    if validity is None or not validity.valid_states:
        raise ValueError(f"class {cls.label} has no valid states in the ontology")

    m = len(cycle_samples[0].sensors) if cycle_samples else 0
    names = sensor_names(m)
    designated = designated_sensors(cls, m)
    rng = np.random.default_rng(seed if not isinstance(seed, int) else [seed])
    out: list[MultimodalSample] = []
    for sample in cycle_samples:
        if sample.state.index not in validity.valid_states or sample.step % 2 == 0:
            out.append(sample)
            continue
        values = list(sample.sensors)
        for l in designated:
            rng_range = expected_range(onto, names[l], sample.state)
            drop = DEVIATION_GAP + rng.uniform(0, DEVIATION_JITTER)
            values[l] = float(rng_range.min - drop)
        out.append(
            MultimodalSample(
                cycle_id=sample.cycle_id,
                state=sample.state,
                step=sample.step,
                sensors=tuple(values),
                label=cls,
                image_ref=sample.image_ref,
            )
        )
    return out


def generate_dataset(cfg: GenConfig) -> Dataset:
    """Deterministically generate a full synthetic dataset (no image pixels)."""
    onto = synthetic_ontology(cfg)
    classes = _cycle_classes(cfg)
    samples: list[MultimodalSample] = []
    for cycle_id, cls in enumerate(classes, start=1):
        cycle = _nominal_cycle(cfg, cycle_id)
        if cls is not AnomalyClass.NO_ANOMALY:
            cycle = inject_anomaly(cycle, cls, onto, seed=[cfg.seed, cycle_id, 1])
        samples.extend(cycle)
    return Dataset(
        samples=tuple(samples),
        sensor_names=sensor_names(cfg.m_sensors),
        sampling_rate_hz=SAMPLING_RATE_HZ,
    )


_PART_REGIONS = {
    # (row_lo, row_hi, col_lo, col_hi) as fractions of the frame, plus the
    # dominant color channel for the part marker.
    "nose": (0.05, 0.28, 0.30, 0.70, 0),
    "body2": (0.33, 0.58, 0.22, 0.78, 1),
    "body1": (0.63, 0.95, 0.18, 0.82, 2),
}


def render_synthetic_image(
    state: CycleState,
    cls: AnomalyClass,
    strength: float,
    seed,
    image_size: int = 32,
) -> SyntheticImage:
    """Render one camera frame: base texture plus per-part markers.

    Present parts draw at full contrast; parts missing under ``cls`` draw at
    contrast scaled down by ``strength`` (strength 0 renders them as if
    present, strength 1 removes them entirely).
    """
    if state.index not in FUSION_STATES:
        raise ValueError(f"images exist only at fusion states {FUSION_STATES}, got {state.index}")
    if not 0.0 <= strength <= 1.0:
        raise ValueError("strength must be in [0, 1]")
    rng = np.random.default_rng(seed if not isinstance(seed, int) else [seed])
    size = image_size
    pixels = rng.uniform(0.0, 0.15, size=(size, size, 3))
    missing = MISSING_PARTS[cls]
    for part, (r0, r1, c0, c1, channel) in _PART_REGIONS.items():
        contrast = 0.85 if part not in missing else 0.85 * (1.0 - strength)
        rows = slice(int(r0 * size), max(int(r1 * size), int(r0 * size) + 1))
        cols = slice(int(c0 * size), max(int(c1 * size), int(c0 * size) + 1))
        pixels[rows, cols, channel] += contrast
        pixels[rows, cols, (channel + 1) % 3] += contrast * 0.2
    np.clip(pixels, 0.0, 1.0, out=pixels)
    return SyntheticImage(pixels=pixels, state=state, truth_label=cls)


def generate_images(cfg: GenConfig) -> dict[str, np.ndarray]:
    """Pixels for every image reference in :func:`generate_dataset`'s output.

    Frames show the cycle's true part configuration (the fault is visible in
    imagery for the whole cycle, not only on the steps where the electrical
    signature manifests).
    """
    classes = _cycle_classes(cfg)
    images: dict[str, np.ndarray] = {}
    for cycle_id, cls in enumerate(classes, start=1):
        for s in FUSION_STATES:
            for k in range(cfg.steps_per_state):
                ref = image_ref(cycle_id, s, k)
                img = render_synthetic_image(
                    CycleState(s),
                    cls,
                    cfg.image_signal_strength,
                    seed=[cfg.seed, cycle_id, s, k, 2],
                    image_size=cfg.image_size,
                )
                images[ref] = img.pixels
    return images
