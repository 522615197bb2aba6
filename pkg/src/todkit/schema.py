"""API schema: the services, intents, and slots that bound every legal label.

The schema file is a single UTF-8 JSON document:

    {
      "version": "0.1",
      "services": [
        {
          "name": "hotel",
          "description": "...",
          "slots": [
            {"name": "area", "description": "...", "is_categorical": true,
             "possible_values": ["north", "south", "east", "west", "centre"]}
          ],
          "intents": [
            {"name": "find_hotel", "description": "...",
             "required_slots": [], "optional_slots": ["area"]}
          ]
        }
      ]
    }

All names are canonicalized (lowercase, spaces to underscores) at parse
boundaries, because model completions vary casing. A loaded Schema is
immutable and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional


def canon_name(name: str) -> str:
    """Canonical form of a service/slot/intent name."""
    return name.strip().lower().replace(" ", "_")


class SchemaError(ValueError):
    """Malformed or invariant-violating schema file."""


class SlotValueError(ValueError):
    """A value rejected for a slot; carries the slot name and the value."""

    def __init__(self, slot: str, value: str, reason: str = "not an allowed value"):
        self.slot = slot
        self.value = value
        super().__init__(f"slot {slot!r}: {reason}: {value!r}")


@dataclass(frozen=True)
class Slot:
    name: str
    description: str
    is_categorical: bool
    possible_values: tuple[str, ...] = ()

    def validate_value(self, value: str) -> str:
        """Normalize a candidate value for this slot.

        Categorical slots match case-insensitively against possible_values and
        return the canonical casing; free-text slots are returned trimmed.
        Raises SlotValueError when a categorical value is not allowed.
        """
        value = value.strip()
        if not self.is_categorical:
            return value
        lowered = value.lower()
        for allowed in self.possible_values:
            if allowed.lower() == lowered:
                return allowed
        raise SlotValueError(self.name, value)


@dataclass(frozen=True)
class Intent:
    name: str
    description: str
    required_slots: tuple[str, ...] = ()
    optional_slots: tuple[str, ...] = ()

    @property
    def all_slots(self) -> tuple[str, ...]:
        return self.required_slots + self.optional_slots


@dataclass(frozen=True)
class Service:
    name: str
    description: str
    slots: tuple[Slot, ...] = ()
    intents: tuple[Intent, ...] = ()

    def slot(self, name: str) -> Optional[Slot]:
        key = canon_name(name)
        for s in self.slots:
            if canon_name(s.name) == key:
                return s
        return None


@dataclass(frozen=True)
class Schema:
    services: tuple[Service, ...]
    version: str = "0"
    # canonical-name lookup tables, built once at load
    _service_index: dict = field(default_factory=dict, repr=False, compare=False)
    _intent_index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for svc in self.services:
            self._service_index[canon_name(svc.name)] = svc
            for intent in svc.intents:
                self._intent_index[canon_name(intent.name)] = (svc, intent)

    def service(self, name: str) -> Optional[Service]:
        return self._service_index.get(canon_name(name))

    def intent(self, name: str) -> Optional[tuple[Service, Intent]]:
        """Resolve an intent name to its (service, intent) pair."""
        return self._intent_index.get(canon_name(name))

    def intents(self) -> list[tuple[Service, Intent]]:
        return [(svc, intent) for svc in self.services for intent in svc.intents]

    def slot_keys(self) -> list[tuple[str, str]]:
        """All (service, slot) canonical key pairs."""
        return [
            (canon_name(svc.name), canon_name(slot.name))
            for svc in self.services
            for slot in svc.slots
        ]


def lookup_slot(schema: Schema, service: str, slot: str) -> Optional[Slot]:
    """Find a declared slot; names are matched after canonicalization."""
    svc = schema.service(service)
    if svc is None:
        return None
    return svc.slot(slot)


def validate_value(slot: Slot, value: str) -> str:
    return slot.validate_value(value)


def _require(cond: bool, message: str):
    if not cond:
        raise SchemaError(message)


def schema_from_dict(doc: dict) -> Schema:
    """Build and validate a Schema from a parsed JSON document."""
    _require(isinstance(doc, dict), "top level must be an object")
    services_doc = doc.get("services")
    _require(isinstance(services_doc, list), 'missing "services" list')
    services = []
    seen_services = set()
    for sdoc in services_doc:
        name = sdoc.get("name", "")
        _require(bool(name), "service with empty name")
        key = canon_name(name)
        _require(key not in seen_services, f"duplicate service name {name!r}")
        seen_services.add(key)

        slots = []
        seen_slots = set()
        for slot_doc in sdoc.get("slots", []):
            slot_name = slot_doc.get("name", "")
            _require(bool(slot_name), f"service {name!r}: slot with empty name")
            slot_key = canon_name(slot_name)
            _require(
                slot_key not in seen_slots,
                f"service {name!r}: duplicate slot name {slot_name!r}",
            )
            seen_slots.add(slot_key)
            is_cat = bool(slot_doc.get("is_categorical", False))
            values = tuple(str(v) for v in slot_doc.get("possible_values", []))
            _require(
                not is_cat or len(values) > 0,
                f"categorical slot {slot_name!r} has no possible_values",
            )
            _require(
                is_cat or len(values) == 0,
                f"non-categorical slot {slot_name!r} declares possible_values",
            )
            slots.append(
                Slot(
                    name=slot_name,
                    description=str(slot_doc.get("description", "")),
                    is_categorical=is_cat,
                    possible_values=values,
                )
            )

        intents = []
        seen_intents = set()
        for intent_doc in sdoc.get("intents", []):
            intent_name = intent_doc.get("name", "")
            _require(bool(intent_name), f"service {name!r}: intent with empty name")
            intent_key = canon_name(intent_name)
            _require(
                intent_key not in seen_intents,
                f"service {name!r}: duplicate intent name {intent_name!r}",
            )
            seen_intents.add(intent_key)
            required = tuple(str(s) for s in intent_doc.get("required_slots", []))
            optional = tuple(str(s) for s in intent_doc.get("optional_slots", []))
            overlap = {canon_name(s) for s in required} & {canon_name(s) for s in optional}
            _require(
                not overlap,
                f"intent {intent_name!r}: slots both required and optional: {sorted(overlap)}",
            )
            for slot_ref in required + optional:
                _require(
                    canon_name(slot_ref) in seen_slots,
                    f"intent {intent_name!r} references undeclared slot {slot_ref!r}",
                )
            intents.append(
                Intent(
                    name=intent_name,
                    description=str(intent_doc.get("description", "")),
                    required_slots=required,
                    optional_slots=optional,
                )
            )

        services.append(
            Service(
                name=name,
                description=str(sdoc.get("description", "")),
                slots=tuple(slots),
                intents=tuple(intents),
            )
        )
    return Schema(services=tuple(services), version=str(doc.get("version", "0")))


def load_schema(path: str | Path) -> Schema:
    """Load and validate a schema file. Raises SchemaError on any violation."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    return schema_from_dict(doc)


def schema_to_dict(schema: Schema) -> dict:
    return {
        "version": schema.version,
        "services": [
            {
                "name": svc.name,
                "description": svc.description,
                "slots": [
                    {
                        "name": s.name,
                        "description": s.description,
                        "is_categorical": s.is_categorical,
                        "possible_values": list(s.possible_values),
                    }
                    for s in svc.slots
                ],
                "intents": [
                    {
                        "name": i.name,
                        "description": i.description,
                        "required_slots": list(i.required_slots),
                        "optional_slots": list(i.optional_slots),
                    }
                    for i in svc.intents
                ],
            }
            for svc in schema.services
        ],
    }


def serialize_schema(schema: Schema) -> str:
    return json.dumps(schema_to_dict(schema), indent=2, sort_keys=False)
