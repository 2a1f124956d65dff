"""JSON instance, controller and result files.

Rationals are written as ``{"num": n, "den": d}``; on input integers,
decimal or ``"p/q"`` strings and JSON numbers (parsed from their literal
text, so ``0.1`` is exactly 1/10) are accepted as well.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Any

import jsonschema

from .core import FrequencyVector, InvalidInstance, MmsInstance, Mode, PeriodicController, SafeBox, TimedAction
from .implicit import BuildingSpec, Setting, ZoneSpec
from .ordergraph import OrderSpec


class InputError(ValueError):
    """A file that cannot be read as an instance, controller or config."""


_RATIONAL = {
    "anyOf": [
        {"type": "number"},
        {"type": "string", "pattern": r"^\s*[-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?(\s*/\s*\d+)?\s*$"},
        {
            "type": "object",
            "properties": {"num": {"type": "integer"}, "den": {"type": "integer", "not": {"const": 0}}},
            "required": ["num", "den"],
            "additionalProperties": False,
        },
    ]
}
_VECTOR = {"type": "array", "items": _RATIONAL, "minItems": 1}
_BOX = {
    "type": "object",
    "properties": {"l": _VECTOR, "u": _VECTOR},
    "required": ["l", "u"],
}

EXPLICIT_SCHEMA = {
    "type": "object",
    "properties": {
        "vars": {"type": "integer", "minimum": 1},
        "modes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "a": _VECTOR,
                    "b": _VECTOR,
                    "price": _RATIONAL,
                },
                "required": ["id", "a", "b"],
            },
        },
        "box": _BOX,
        "x0": _VECTOR,
        "order_graph": {
            "type": "object",
            "properties": {
                "edges": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
                },
                "initial": {"type": "string"},
            },
            "required": ["edges", "initial"],
        },
    },
    "required": ["vars", "modes", "box"],
}

IMPLICIT_SCHEMA = {
    "type": "object",
    "properties": {
        "zones": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "off": {
                        "type": "object",
                        "properties": {"a": _RATIONAL, "b": _RATIONAL},
                        "required": ["a"],
                    },
                    "settings": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "properties": {"a": _RATIONAL, "b": _RATIONAL, "power": _RATIONAL},
                            "required": ["a", "b", "power"],
                        },
                    },
                },
                "required": ["off"],
            },
        },
        "comfort": _BOX,
        "x0": _VECTOR,
        "outside_temp": _RATIONAL,
        "max_active": {"type": ["integer", "null"], "minimum": 0},
    },
    "required": ["zones", "comfort"],
}

CONTROLLER_SCHEMA = {
    "type": "object",
    "properties": {
        "prefix": {"type": "array", "items": {"$ref": "#/$defs/action"}},
        "period": {"type": "array", "items": {"$ref": "#/$defs/action"}, "minItems": 1},
    },
    "required": ["period"],
    "$defs": {
        "action": {
            "type": "object",
            "properties": {"mode": {"type": "string"}, "dwell": _RATIONAL},
            "required": ["mode", "dwell"],
        }
    },
}


def rational(value, where: str = "value") -> Fraction:
    if isinstance(value, bool):
        raise InputError(f"{where}: expected a rational, got a boolean")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, Decimal):
        return Fraction(value)
    if isinstance(value, float):
        # only reached for floats built in Python; JSON input arrives as Decimal
        return Fraction(Decimal(repr(value)))
    if isinstance(value, str):
        try:
            return Fraction(value.replace(" ", ""))
        except (ValueError, ZeroDivisionError):
            raise InputError(f"{where}: cannot parse {value!r} as a rational") from None
    if isinstance(value, dict) and set(value) == {"num", "den"}:
        if value["den"] == 0:
            raise InputError(f"{where}: zero denominator")
        return Fraction(value["num"], value["den"])
    raise InputError(f"{where}: expected a rational, got {value!r}")


def encode_rational(q) -> dict:
    q = Fraction(q)
    return {"num": q.numerator, "den": q.denominator}


def _path(err: jsonschema.ValidationError) -> str:
    out = ""
    for p in err.absolute_path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<document>"


def _validate(doc: Any, schema: dict, what: str) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = list(validator.iter_errors(doc))
    if errors:
        err = max(errors, key=lambda e: len(e.absolute_path))
        raise InputError(f"{what}: field {_path(err)}: {err.message}")


def _jsonable(doc):
    """Turn Decimals into floats so jsonschema's type checks see numbers."""
    if isinstance(doc, dict):
        return {k: _jsonable(v) for k, v in doc.items()}
    if isinstance(doc, list):
        return [_jsonable(v) for v in doc]
    if isinstance(doc, Decimal):
        return float(doc)
    return doc


def load_json(path) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh, parse_float=Decimal)
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _vec(values, where):
    return tuple(rational(v, f"{where}[{k}]") for k, v in enumerate(values))


@dataclass(frozen=True)
class ExplicitFile:
    instance: MmsInstance
    box: SafeBox
    x0: tuple | None = None
    order: OrderSpec | None = None


@dataclass(frozen=True)
class BuildingFile:
    building: BuildingSpec
    x0: tuple | None = None
    outside_temp: Fraction | None = None
    header: dict | None = None


def is_implicit(doc) -> bool:
    return isinstance(doc, dict) and "zones" in doc


def parse_explicit(doc) -> ExplicitFile:
    _validate(_jsonable(doc), EXPLICIT_SCHEMA, "instance")
    n = doc["vars"]
    modes = []
    try:
        for k, m in enumerate(doc["modes"]):
            where = f"modes[{k}]"
            a = _vec(m["a"], f"{where}.a")
            b = _vec(m["b"], f"{where}.b")
            price = rational(m["price"], f"{where}.price") if "price" in m else None
            try:
                modes.append(Mode(m["id"], a, b, price))
            except InvalidInstance as exc:
                raise InputError(f"{where}: {exc}") from None
        box = SafeBox(_vec(doc["box"]["l"], "box.l"), _vec(doc["box"]["u"], "box.u"))
        instance = MmsInstance(n, tuple(modes))
        if box.dim != n:
            raise InputError(f"box: dimension {box.dim} does not match vars = {n}")
        x0 = _vec(doc["x0"], "x0") if "x0" in doc else None
        if x0 is not None and len(x0) != n:
            raise InputError(f"x0: {len(x0)} entries, expected {n}")
        order = None
        if "order_graph" in doc:
            g = doc["order_graph"]
            order = OrderSpec(frozenset(tuple(e) for e in g["edges"]), g["initial"])
            order.validate(instance)
    except InvalidInstance as exc:
        raise InputError(str(exc)) from None
    return ExplicitFile(instance, box, x0, order)


def parse_building(doc) -> BuildingFile:
    _validate(_jsonable(doc), IMPLICIT_SCHEMA, "building")
    t_out = rational(doc["outside_temp"], "outside_temp") if "outside_temp" in doc else None
    zones = []
    try:
        for k, z in enumerate(doc["zones"]):
            where = f"zones[{k}]"
            off_a = rational(z["off"]["a"], f"{where}.off.a")
            if "b" in z["off"]:
                off_b = rational(z["off"]["b"], f"{where}.off.b")
            elif t_out is not None:
                off_b = off_a * t_out
            else:
                raise InputError(f"{where}.off.b: missing and no outside_temp to derive it from")
            settings = []
            for j, s in enumerate(z.get("settings", [])):
                sw = f"{where}.settings[{j}]"
                try:
                    settings.append(
                        Setting(rational(s["a"], f"{sw}.a"), rational(s["b"], f"{sw}.b"), rational(s["power"], f"{sw}.power"))
                    )
                except InvalidInstance as exc:
                    raise InputError(f"{sw}: {exc}") from None
            try:
                zones.append(ZoneSpec(off_a, off_b, tuple(settings)))
            except InvalidInstance as exc:
                raise InputError(f"{where}: {exc}") from None
        comfort = SafeBox(_vec(doc["comfort"]["l"], "comfort.l"), _vec(doc["comfort"]["u"], "comfort.u"))
        building = BuildingSpec(tuple(zones), comfort, doc.get("max_active"))
    except InvalidInstance as exc:
        raise InputError(str(exc)) from None
    x0 = _vec(doc["x0"], "x0") if "x0" in doc else None
    if x0 is not None and len(x0) != building.num_zones:
        raise InputError(f"x0: {len(x0)} entries, expected {building.num_zones}")
    return BuildingFile(building, x0, t_out, doc.get("generator"))


def load_instance(path):
    """Read either an explicit instance or a building description."""
    doc = load_json(path)
    if not isinstance(doc, dict):
        raise InputError(f"{path}: top level must be an object")
    return parse_building(doc) if is_implicit(doc) else parse_explicit(doc)


def dump_explicit(instance: MmsInstance, box: SafeBox, x0=None, order: OrderSpec | None = None) -> dict:
    doc = {
        "vars": instance.num_vars,
        "modes": [],
        "box": {"l": [encode_rational(v) for v in box.l], "u": [encode_rational(v) for v in box.u]},
    }
    for m in instance.modes:
        entry = {"id": m.id, "a": [encode_rational(v) for v in m.a], "b": [encode_rational(v) for v in m.b]}
        if m.price is not None:
            entry["price"] = encode_rational(m.price)
        doc["modes"].append(entry)
    if x0 is not None:
        doc["x0"] = [encode_rational(v) for v in x0]
    if order is not None:
        doc["order_graph"] = {"edges": [list(e) for e in sorted(order.edges)], "initial": order.initial_mode}
    return doc


def dump_building(building: BuildingSpec, x0=None, outside_temp=None, header: dict | None = None) -> dict:
    doc = {}
    if header is not None:
        doc["generator"] = header
    doc["zones"] = [
        {
            "off": {"a": encode_rational(z.off_a), "b": encode_rational(z.off_b)},
            "settings": [
                {"a": encode_rational(s.a), "b": encode_rational(s.b), "power": encode_rational(s.power)}
                for s in z.settings
            ],
        }
        for z in building.zones
    ]
    doc["comfort"] = {
        "l": [encode_rational(v) for v in building.comfort.l],
        "u": [encode_rational(v) for v in building.comfort.u],
    }
    if x0 is not None:
        doc["x0"] = [encode_rational(v) for v in x0]
    if outside_temp is not None:
        doc["outside_temp"] = encode_rational(outside_temp)
    if building.max_active is not None:
        doc["max_active"] = building.max_active
    return doc


def _actions(items, where):
    return tuple(TimedAction(a["mode"], rational(a["dwell"], f"{where}[{k}].dwell")) for k, a in enumerate(items))


def dump_controller(controller: PeriodicController, s=None, frequency: FrequencyVector | None = None) -> dict:
    doc = {
        "prefix": [{"mode": a.mode, "dwell": encode_rational(a.dwell)} for a in controller.prefix],
        "period": [{"mode": a.mode, "dwell": encode_rational(a.dwell)} for a in controller.period],
        "min_dwell": encode_rational(controller.min_dwell),
    }
    if s is not None:
        doc["s"] = encode_rational(s)
    if frequency is not None:
        doc["frequency"] = {k: encode_rational(v) for k, v in frequency.weights.items()}
    return doc


def parse_controller(doc) -> PeriodicController:
    if isinstance(doc, dict) and "controller" in doc and "period" not in doc:
        doc = doc["controller"]
    _validate(_jsonable(doc), CONTROLLER_SCHEMA, "controller")
    try:
        return PeriodicController(_actions(doc["period"], "period"), _actions(doc.get("prefix", []), "prefix"))
    except InvalidInstance as exc:
        raise InputError(f"controller: {exc}") from None


def load_controller(path) -> PeriodicController:
    return parse_controller(load_json(path))


def write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
