"""Superdense logical time.

A tag is a (time, microstep) pair: nanoseconds on a signed 64-bit axis plus
an unsigned 32-bit microstep that orders cause and effect within one instant.
Tags compare lexicographically. Two sentinels bracket the axis: NEVER sorts
below every reachable tag and FOREVER above, and both absorb delay addition.
"""

from __future__ import annotations

import re
from typing import NamedTuple

TIME_MIN = -(2**63)
TIME_MAX = 2**63 - 1
MICROSTEP_MAX = 2**32 - 1


class Tag(NamedTuple):
    time: int
    microstep: int


# The extreme time values are reserved for the sentinels; ordinary tags are
# built from finite clock readings and bounded delays.
NEVER = Tag(TIME_MIN, 0)
FOREVER = Tag(TIME_MAX, MICROSTEP_MAX)


def tag_compare(a: Tag, b: Tag) -> int:
    """-1, 0 or 1 as a sorts before, equal to, or after b."""
    if a < b:
        return -1
    if a > b:
        return 1
    return 0


def tag_min(a: Tag, b: Tag) -> Tag:
    return a if a <= b else b


def tag_max(a: Tag, b: Tag) -> Tag:
    return a if a >= b else b


def tag_add_delay(g: Tag, delay: int) -> Tag:
    """The tag of an effect scheduled from g after a nonnegative delay.

    Zero delay advances the microstep only; a positive delay advances time
    and resets the microstep. Sentinels absorb; overflow clamps to FOREVER.
    """
    if delay < 0:
        raise ValueError(f"negative delay: {delay}")
    if g == NEVER or g == FOREVER:
        return g
    if delay == 0:
        if g.microstep >= MICROSTEP_MAX:
            return FOREVER
        return Tag(g.time, g.microstep + 1)
    t = g.time + delay
    if t >= TIME_MAX:
        return FOREVER
    return Tag(t, 0)


def tag_pred(g: Tag) -> Tag:
    """The greatest tag strictly below g. Sentinels are fixed points."""
    if g == NEVER or g == FOREVER:
        return g
    if g.microstep > 0:
        return Tag(g.time, g.microstep - 1)
    if g.time - 1 <= TIME_MIN:
        return NEVER
    return Tag(g.time - 1, MICROSTEP_MAX)


def format_tag(g: Tag) -> str:
    if g == NEVER:
        return "NEVER"
    if g == FOREVER:
        return "FOREVER"
    return f"{g.time}:{g.microstep}"


_UNITS = {
    "ns": 1,
    "nsec": 1,
    "nsecs": 1,
    "us": 1_000,
    "usec": 1_000,
    "usecs": 1_000,
    "ms": 1_000_000,
    "msec": 1_000_000,
    "msecs": 1_000_000,
    "s": 1_000_000_000,
    "sec": 1_000_000_000,
    "secs": 1_000_000_000,
    "m": 60_000_000_000,
    "min": 60_000_000_000,
    "mins": 60_000_000_000,
    "h": 3_600_000_000_000,
    "hour": 3_600_000_000_000,
    "hours": 3_600_000_000_000,
}

_DURATION_RE = re.compile(r"^\s*(-?\d+(?:\.\d+)?)\s*([a-z]*)\s*$")


def parse_duration(value: int | float | str) -> int:
    """Parse a duration into nanoseconds.

    Accepts a bare number (nanoseconds) or a number with a unit suffix,
    e.g. "5 ms", "10usec", "1.5s".
    """
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"fractional nanoseconds: {value!r}")
        return int(value)
    m = _DURATION_RE.match(value.lower())
    if not m:
        raise ValueError(f"bad duration: {value!r}")
    number, unit = m.groups()
    scale = 1 if unit == "" else _UNITS.get(unit)
    if scale is None:
        raise ValueError(f"bad duration unit: {value!r}")
    ns = float(number) * scale
    if abs(ns - round(ns)) > 1e-9:
        raise ValueError(f"duration is not a whole number of ns: {value!r}")
    return int(round(ns))


def format_duration(ns: int) -> str:
    """Render nanoseconds with the largest exact unit."""
    for unit, scale in (("s", 1_000_000_000), ("ms", 1_000_000), ("us", 1_000)):
        if ns != 0 and ns % scale == 0:
            return f"{ns // scale}{unit}"
    return f"{ns}ns"
