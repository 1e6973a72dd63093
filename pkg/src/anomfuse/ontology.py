"""In-memory process ontology: sensors, robots, equipment and cycle states.

The ontology is a typed graph with per-state expected sensor ranges and
per-state valid anomaly types. It backs three things: the range penalty used
during training, consistency checking of predictions, and user-level
explanations. Updates are non-destructive (they return a new ontology), so
readers can share an instance freely across threads.

Documents are plain YAML with four sections: ``entities``, ``bindings``,
``validities`` and ``relations`` (see the shipped fixture for the format).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Any, Iterable, Mapping, Sequence

import yaml

from .core import AnomalyClass, CycleState, SensorRange

ENTITY_KINDS = ("sensor", "robot", "equipment")

DOCUMENT_VERSION = 1


class OntologyError(Exception):
    """Base class for ontology failures."""


class OntologyValidationError(OntologyError):
    """Raised when a document or graph fails validation; carries every violation."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class UnknownSensorError(OntologyError):
    pass


class Scenario(Enum):
    """Outcome of checking a prediction against the ontology."""

    CONSISTENT = "consistent"
    ANOMALY_DESPITE_IN_RANGE = "anomaly-despite-in-range"
    NORMAL_DESPITE_OUT_OF_RANGE = "normal-despite-out-of-range"
    INVALID_ANOMALY_FOR_STATE = "invalid-anomaly-for-state"


@dataclass(frozen=True)
class OntologyEntity:
    """A sensor, robot or equipment node."""

    id: str
    kind: str
    properties: Mapping[str, Any] = field(default_factory=dict)

    def global_range(self) -> SensorRange | None:
        lo, hi = self.properties.get("min"), self.properties.get("max")
        if lo is None or hi is None:
            return None
        return SensorRange(self.id, float(lo), float(hi))


@dataclass(frozen=True)
class StateBinding:
    """Role (and optionally expected range) of an entity in one cycle state."""

    entity_id: str
    state: CycleState
    function: str = ""
    expected_range: SensorRange | None = None


@dataclass(frozen=True)
class AnomalyValidity:
    """Cycle states in which an anomaly class can legitimately occur."""

    anomaly: AnomalyClass
    valid_states: frozenset[int]

    @property
    def valid_from_state(self) -> int:
        return min(self.valid_states)


@dataclass(frozen=True)
class Relation:
    """Typed edge: entity--entity or entity--state (target ``state:<n>``)."""

    source: str
    relation: str
    target: str


@dataclass(frozen=True)
class ProcessOntology:
    entities: tuple[OntologyEntity, ...] = ()
    bindings: tuple[StateBinding, ...] = ()
    validities: tuple[AnomalyValidity, ...] = ()
    relations: tuple[Relation, ...] = ()

    @cached_property
    def _entity_index(self) -> dict[str, OntologyEntity]:
        return {e.id: e for e in self.entities}

    @cached_property
    def _binding_index(self) -> dict[tuple[str, int], StateBinding]:
        # Range-bearing bindings win over function-only ones for the same pair.
        idx: dict[tuple[str, int], StateBinding] = {}
        for b in self.bindings:
            key = (b.entity_id, b.state.index)
            if key not in idx or (idx[key].expected_range is None and b.expected_range is not None):
                idx[key] = b
        return idx

    def entity(self, entity_id: str) -> OntologyEntity:
        try:
            return self._entity_index[entity_id]
        except KeyError:
            raise UnknownSensorError(f"unknown entity: {entity_id!r}") from None

    def has_entity(self, entity_id: str) -> bool:
        return entity_id in self._entity_index

    def bindings_for_state(self, state: CycleState) -> list[StateBinding]:
        return [b for b in self.bindings if b.state == state]


@dataclass(frozen=True)
class SensorFlag:
    sensor_id: str
    in_range: bool
    observed: float
    expected: SensorRange


@dataclass(frozen=True)
class ConsistencyReport:
    """Per-sensor range flags plus the categorical scenario for one prediction."""

    per_sensor_flags: tuple[SensorFlag, ...]
    unevaluated: tuple[str, ...]
    label_consistent: bool
    scenario: Scenario


# ---------------------------------------------------------------------------
# construction / validation


def _validate(
    entities: Sequence[OntologyEntity],
    bindings: Sequence[StateBinding],
    validities: Sequence[AnomalyValidity],
    relations: Sequence[Relation],
) -> list[str]:
    errors: list[str] = []
    ids: set[str] = set()
    for e in entities:
        if e.kind not in ENTITY_KINDS:
            errors.append(f"entity {e.id!r}: unknown kind {e.kind!r}")
        if e.id in ids:
            errors.append(f"duplicate entity id {e.id!r}")
        ids.add(e.id)
        rng = e.global_range()
        if rng is None and ("min" in e.properties) != ("max" in e.properties):
            errors.append(f"entity {e.id!r}: global range needs both min and max")

    seen_pairs: set[tuple[str, int]] = set()
    by_id = {e.id: e for e in entities}
    for b in bindings:
        if b.entity_id not in by_id:
            errors.append(f"binding references unknown entity {b.entity_id!r}")
            continue
        pair = (b.entity_id, b.state.index)
        if pair in seen_pairs and b.expected_range is not None:
            errors.append(f"multiple expected ranges for {b.entity_id!r} at state {b.state.index}")
        if b.expected_range is not None:
            seen_pairs.add(pair)
            g = by_id[b.entity_id].global_range()
            if g is not None and not (g.min <= b.expected_range.min <= b.expected_range.max <= g.max):
                errors.append(
                    f"range for {b.entity_id!r} at state {b.state.index} exceeds "
                    f"global bounds [{g.min}, {g.max}]"
                )

    for v in validities:
        if v.anomaly is not AnomalyClass.NO_ANOMALY and not v.valid_states:
            errors.append(f"validity for {v.anomaly.label} has no valid states")
        for idx in v.valid_states:
            if not 1 <= idx <= 21:
                errors.append(f"validity for {v.anomaly.label}: state {idx} out of [1, 21]")

    for r in relations:
        if r.source not in by_id:
            errors.append(f"relation source references unknown entity {r.source!r}")
        if not r.target.startswith("state:") and r.target not in by_id:
            errors.append(f"relation target references unknown entity {r.target!r}")
        if r.target.startswith("state:"):
            try:
                idx = int(r.target.split(":", 1)[1])
            except ValueError:
                idx = -1
            if not 1 <= idx <= 21:
                errors.append(f"relation target {r.target!r} is not a valid state")
    return errors


def make_ontology(
    entities: Iterable[OntologyEntity] = (),
    bindings: Iterable[StateBinding] = (),
    validities: Iterable[AnomalyValidity] = (),
    relations: Iterable[Relation] = (),
) -> ProcessOntology:
    """Build and validate an ontology from already-typed parts."""
    ent, bnd, val, rel = tuple(entities), tuple(bindings), tuple(validities), tuple(relations)
    errors = _validate(ent, bnd, val, rel)
    if errors:
        raise OntologyValidationError(errors)
    return ProcessOntology(ent, bnd, val, rel)


def build_ontology(doc: Mapping[str, Any]) -> ProcessOntology:
    """Parse a document (the YAML structure) into a validated ontology."""
    if not isinstance(doc, Mapping):
        raise OntologyValidationError(["document root must be a mapping"])
    errors: list[str] = []
    entities: list[OntologyEntity] = []
    bindings: list[StateBinding] = []
    validities: list[AnomalyValidity] = []
    relations: list[Relation] = []

    for i, raw in enumerate(doc.get("entities") or []):
        try:
            entities.append(
                OntologyEntity(
                    id=str(raw["id"]),
                    kind=str(raw.get("kind", "sensor")),
                    properties=dict(raw.get("properties") or {}),
                )
            )
        except (KeyError, TypeError) as exc:
            errors.append(f"entities[{i}]: malformed ({exc})")

    for i, raw in enumerate(doc.get("bindings") or []):
        try:
            rng = None
            if raw.get("range") is not None:
                lo, hi = raw["range"]
                rng = SensorRange(str(raw["entity"]), float(lo), float(hi))
            bindings.append(
                StateBinding(
                    entity_id=str(raw["entity"]),
                    state=CycleState(int(raw["state"])),
                    function=str(raw.get("function", "")),
                    expected_range=rng,
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            errors.append(f"bindings[{i}]: malformed ({exc})")

    for i, raw in enumerate(doc.get("validities") or []):
        try:
            validities.append(
                AnomalyValidity(
                    anomaly=AnomalyClass.from_label(str(raw["anomaly"])),
                    valid_states=frozenset(int(s) for s in raw["states"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            errors.append(f"validities[{i}]: malformed ({exc})")

    for i, raw in enumerate(doc.get("relations") or []):
        try:
            src, rel, tgt = raw
            relations.append(Relation(str(src), str(rel), str(tgt)))
        except (TypeError, ValueError) as exc:
            errors.append(f"relations[{i}]: malformed ({exc})")

    errors.extend(_validate(entities, bindings, validities, relations))
    if errors:
        raise OntologyValidationError(errors)
    return ProcessOntology(tuple(entities), tuple(bindings), tuple(validities), tuple(relations))


def serialize(onto: ProcessOntology) -> dict[str, Any]:
    """Ontology -> plain document. Inverse of :func:`build_ontology`."""
    return {
        "version": DOCUMENT_VERSION,
        "entities": [
            {"id": e.id, "kind": e.kind, "properties": dict(e.properties)}
            for e in onto.entities
        ],
        "bindings": [
            {
                "entity": b.entity_id,
                "state": b.state.index,
                "function": b.function,
                "range": None
                if b.expected_range is None
                else [b.expected_range.min, b.expected_range.max],
            }
            for b in onto.bindings
        ],
        "validities": [
            {"anomaly": v.anomaly.label, "states": sorted(v.valid_states)}
            for v in onto.validities
        ],
        "relations": [[r.source, r.relation, r.target] for r in onto.relations],
    }


def deserialize(doc: Mapping[str, Any]) -> ProcessOntology:
    return build_ontology(doc)


def save_ontology(onto: ProcessOntology, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(serialize(onto), fh, sort_keys=False)


def load_ontology(path) -> ProcessOntology:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise OntologyValidationError([f"document does not parse: {exc}"]) from exc
    if doc is None:
        raise OntologyValidationError(["document is empty"])
    return build_ontology(doc)


# ---------------------------------------------------------------------------
# queries


def expected_range(
    onto: ProcessOntology, sensor_id: str, state: CycleState
) -> SensorRange | None:
    """Per-state expected range if bound, else the sensor's global range, else None."""
    entity = onto.entity(sensor_id)
    binding = onto._binding_index.get((sensor_id, state.index))
    if binding is not None and binding.expected_range is not None:
        return binding.expected_range
    return entity.global_range()


def valid_anomaly_types(onto: ProcessOntology, state: CycleState) -> set[AnomalyClass]:
    """Classes that may occur at this state. NoAnomaly is always permitted."""
    valid = {AnomalyClass.NO_ANOMALY}
    for v in onto.validities:
        if state.index in v.valid_states:
            valid.add(v.anomaly)
    return valid


def update_range(
    onto: ProcessOntology, sensor_id: str, state: CycleState, rng: SensorRange
) -> ProcessOntology:
    """Return a new ontology with the per-state range replaced; the input is untouched."""
    entity = onto.entity(sensor_id)
    g = entity.global_range()
    if g is not None and not (g.min <= rng.min <= rng.max <= g.max):
        raise OntologyValidationError(
            [
                f"range [{rng.min}, {rng.max}] for {sensor_id!r} outside "
                f"global bounds [{g.min}, {g.max}]"
            ]
        )
    new_range = replace(rng, sensor_id=sensor_id)
    matches = [
        i
        for i, b in enumerate(onto.bindings)
        if (b.entity_id, b.state.index) == (sensor_id, state.index)
    ]
    out = list(onto.bindings)
    if matches:
        # Prefer the binding already carrying a range so the pair keeps one.
        target = next(
            (i for i in matches if onto.bindings[i].expected_range is not None),
            matches[0],
        )
        out[target] = replace(onto.bindings[target], expected_range=new_range)
    else:
        out.append(StateBinding(entity_id=sensor_id, state=state, expected_range=new_range))
    return ProcessOntology(onto.entities, tuple(out), onto.validities, onto.relations)


def check_consistency(
    onto: ProcessOntology,
    predicted_sensors: Sequence[float],
    predicted_label: AnomalyClass,
    state: CycleState,
    sensor_ids: Sequence[str],
) -> ConsistencyReport:
    """Flag each predicted sensor against its per-state range and categorize.

    Scenario precedence: invalid-anomaly-for-state > anomaly-despite-in-range
    > normal-despite-out-of-range > consistent. Sensors without a resolvable
    range are excluded from the scenario logic.
    """
    if len(predicted_sensors) != len(sensor_ids):
        raise ValueError("predicted_sensors and sensor_ids must be aligned")
    flags: list[SensorFlag] = []
    unevaluated: list[str] = []
    for sid, value in zip(sensor_ids, predicted_sensors):
        rng = expected_range(onto, sid, state)
        if rng is None:
            unevaluated.append(sid)
            continue
        flags.append(SensorFlag(sid, rng.contains(float(value)), float(value), rng))

    label_ok = predicted_label in valid_anomaly_types(onto, state)
    is_anomaly = predicted_label is not AnomalyClass.NO_ANOMALY
    any_out = any(not f.in_range for f in flags)
    all_in = bool(flags) and not any_out

    if not label_ok:
        scenario = Scenario.INVALID_ANOMALY_FOR_STATE
    elif all_in and is_anomaly:
        scenario = Scenario.ANOMALY_DESPITE_IN_RANGE
    elif any_out and not is_anomaly:
        scenario = Scenario.NORMAL_DESPITE_OUT_OF_RANGE
    else:
        scenario = Scenario.CONSISTENT

    return ConsistencyReport(
        per_sensor_flags=tuple(flags),
        unevaluated=tuple(unevaluated),
        label_consistent=label_ok,
        scenario=scenario,
    )
