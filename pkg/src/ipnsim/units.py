"""Physical constants and parsing of suffixed quantities ("90d", "0.52au", "32GHz")."""

import re

C = 2.99792458e8  # m/s
AU = 1.495978707e11  # m
DAY = 86400.0

DURATION = {"s": 1.0, "m": 60.0, "min": 60.0, "h": 3600.0, "d": DAY}
LENGTH = {"m": 1.0, "km": 1e3, "au": AU}
FREQUENCY = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9, "thz": 1e12}
BITS = {"b": 1.0, "kb": 1e3, "mb": 1e6, "gb": 1e9, "tb": 1e12}
RATE = {"bps": 1.0, "kbps": 1e3, "mbps": 1e6, "gbps": 1e9}
ANGLE = {"rad": 1.0, "deg": 0.017453292519943295}

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z]*)\s*$")


def parse_quantity(value, units, what="quantity", case_sensitive=False):
    """Return ``value`` in SI base units.

    Plain numbers pass through unchanged; strings may carry one of the
    suffixes in ``units``.
    """
    if isinstance(value, bool):
        raise ValueError(f"invalid {what}: {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    m = _QUANTITY.match(str(value))
    if not m:
        raise ValueError(f"invalid {what}: {value!r}")
    number, suffix = m.groups()
    if not suffix:
        return float(number)
    key = suffix if case_sensitive else suffix.lower()
    if key not in units:
        raise ValueError(f"unknown unit {suffix!r} in {what} {value!r} (expected one of {', '.join(units)})")
    return float(number) * units[key]


def parse_duration(value):
    return parse_quantity(value, DURATION, "duration", case_sensitive=True)


def parse_length(value):
    return parse_quantity(value, LENGTH, "length")


def parse_frequency(value):
    return parse_quantity(value, FREQUENCY, "frequency")


def parse_bits(value):
    return parse_quantity(value, BITS, "size")


def parse_rate(value):
    return parse_quantity(value, RATE, "rate")


def parse_angle(value):
    return parse_quantity(value, ANGLE, "angle")
