"""Clinical unit normalization for numeric answer checking.

Units within one dimension convert to a base unit (lengths to mm, volumes to
ml, ...). Unknown units form their own singleton dimension, so two equal
unknown units still compare while different ones are incompatible.
"""
from __future__ import annotations

# unit -> (dimension, factor to the dimension's base unit)
_UNIT_TABLE: dict[str, tuple[str, float]] = {
    "mm": ("length", 1.0),
    "cm": ("length", 10.0),
    "m": ("length", 1000.0),
    "mm2": ("area", 1.0),
    "cm2": ("area", 100.0),
    "ml": ("volume", 1.0),
    "cc": ("volume", 1.0),
    "l": ("volume", 1000.0),
    "mg": ("mass", 1.0),
    "g": ("mass", 1000.0),
    "kg": ("mass", 1_000_000.0),
    "ms": ("time", 1.0),
    "s": ("time", 1000.0),
    "sec": ("time", 1000.0),
    "min": ("time", 60_000.0),
    "bpm": ("rate", 1.0),
    "hz": ("rate", 60.0),
    "%": ("fraction", 1.0),
    "percent": ("fraction", 1.0),
    "cm/s": ("velocity", 1.0),
    "mm/s": ("velocity", 0.1),
    "m/s": ("velocity", 100.0),
    "mmhg": ("pressure", 1.0),
    "wk": ("gestation", 1.0),
    "weeks": ("gestation", 1.0),
}

_ALIASES = {
    "millimeter": "mm", "millimeters": "mm", "millimetre": "mm",
    "centimeter": "cm", "centimeters": "cm", "centimetre": "cm",
    "meter": "m", "meters": "m",
    "milliliter": "ml", "milliliters": "ml",
    "liter": "l", "liters": "l",
    "gram": "g", "grams": "g", "kilogram": "kg", "kilograms": "kg",
    "second": "s", "seconds": "s", "minute": "min", "minutes": "min",
    "mm^2": "mm2", "cm^2": "cm2", "mm²": "mm2", "cm²": "cm2",
    "week": "wk", "wks": "wk",
}


def canonical_unit(unit: str) -> str:
    u = unit.strip().lower()
    return _ALIASES.get(u, u)


def normalize_quantity(value: float, unit: str) -> tuple[float, str]:
    """Return (value in base unit, dimension) for comparison purposes."""
    u = canonical_unit(unit)
    if u in _UNIT_TABLE:
        dimension, factor = _UNIT_TABLE[u]
        return value * factor, dimension
    return value, f"unknown:{u}"


def compatible(unit_a: str, unit_b: str) -> bool:
    return normalize_quantity(1.0, unit_a)[1] == normalize_quantity(1.0, unit_b)[1]
