"""Implicit mode spaces of multi-zone buildings.

Each zone has a heater that is either off or on in one of several settings.
A mode is one choice per zone; its price is the summed power of the heaters
that are on.  The product space is exponential in the zone count, so modes
are generated lazily, cheapest first, from a priority-queue frontier.

Within a zone the options are ranked ``off`` first, then settings by
``(power, index)``.  Every rank vector ``c`` except all-zeros has exactly one
parent: ``c`` with its last nonzero coordinate decremented.  Expanding only
those parent links enumerates the space once, without a visited set.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Iterator

from .core import InvalidInstance, Mode, SafeBox, as_fraction

Choice = tuple  # per zone: None (off) or a setting index


@dataclass(frozen=True)
class Setting:
    a: Fraction
    b: Fraction
    power: Fraction

    def __post_init__(self):
        for name in ("a", "b", "power"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))
        if self.a <= 0:
            raise InvalidInstance("setting decay rate must be strictly positive")
        if self.power < 0:
            raise InvalidInstance("setting power must be nonnegative")


@dataclass(frozen=True)
class ZoneSpec:
    off_a: Fraction
    off_b: Fraction
    settings: tuple[Setting, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "off_a", as_fraction(self.off_a))
        object.__setattr__(self, "off_b", as_fraction(self.off_b))
        object.__setattr__(self, "settings", tuple(self.settings))
        if self.off_a <= 0:
            raise InvalidInstance("zone decay rate must be strictly positive")

    def option(self, choice):
        """(a, b, power) for ``None`` (off) or a setting index."""
        if choice is None:
            return self.off_a, self.off_b, Fraction(0)
        if not 0 <= choice < len(self.settings):
            raise InvalidInstance(f"setting index {choice} out of range")
        s = self.settings[choice]
        return s.a, s.b, s.power

    def ranked_options(self) -> list:
        order = sorted(range(len(self.settings)), key=lambda k: (self.settings[k].power, k))
        return [None] + order


@dataclass(frozen=True)
class BuildingSpec:
    zones: tuple[ZoneSpec, ...]
    comfort: SafeBox
    max_active: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "zones", tuple(self.zones))
        if not self.zones:
            raise InvalidInstance("a building needs at least one zone")
        if self.comfort.dim != len(self.zones):
            raise InvalidInstance("comfort box dimension must equal the zone count")
        if self.max_active is not None and self.max_active < 0:
            raise InvalidInstance("max_active must be nonnegative")

    @property
    def num_zones(self) -> int:
        return len(self.zones)

    def space_size(self) -> int:
        if self.max_active is None:
            n = 1
            for z in self.zones:
                n *= len(z.settings) + 1
            return n
        return sum(1 for _ in all_choices(self))


def choice_id(choice: Choice) -> str:
    """Readable mode id: one digit group per zone, 0 = off, k = setting k-1."""
    return "-".join("0" if c is None else str(c + 1) for c in choice)


def parse_choice_id(mode_id: str) -> Choice:
    return tuple(None if p == "0" else int(p) - 1 for p in mode_id.split("-"))


def materialize_mode(building: BuildingSpec, choice: Choice) -> Mode:
    if len(choice) != building.num_zones:
        raise InvalidInstance(f"choice has {len(choice)} entries for {building.num_zones} zones")
    active = sum(c is not None for c in choice)
    if building.max_active is not None and active > building.max_active:
        raise InvalidInstance(f"{active} heaters on, cap is {building.max_active}")
    a, b, price = [], [], Fraction(0)
    for zone, c in zip(building.zones, choice):
        za, zb, zp = zone.option(c)
        a.append(za)
        b.append(zb)
        price += zp
    return Mode(choice_id(choice), tuple(a), tuple(b), price)


def choice_price(building: BuildingSpec, choice: Choice) -> Fraction:
    return sum((z.option(c)[2] for z, c in zip(building.zones, choice)), Fraction(0))


def all_choices(building: BuildingSpec) -> Iterator[Choice]:
    """Brute-force product enumeration (cap-filtered), in no particular order."""
    spaces = [[None, *range(len(z.settings))] for z in building.zones]
    for choice in product(*spaces):
        if building.max_active is None or sum(c is not None for c in choice) <= building.max_active:
            yield choice


def lex_key(building: BuildingSpec, choice: Choice) -> tuple[int, ...]:
    ranks = [z.ranked_options() for z in building.zones]
    return tuple(r.index(c) for r, c in zip(ranks, choice))


class ModeCursor:
    """Iterator over admissible modes in non-decreasing ``(price, lex rank)`` order."""

    def __init__(self, building: BuildingSpec):
        self.building = building
        self._options = [z.ranked_options() for z in building.zones]
        self._powers = [[z.option(c)[2] for c in opts] for z, opts in zip(building.zones, self._options)]
        start = (0,) * building.num_zones
        self._heap = [(Fraction(0), start)]
        self.materialized = 0
        self.yielded = 0

    def __iter__(self):
        return self

    @property
    def frontier_size(self) -> int:
        return len(self._heap)

    def peek_price(self) -> Fraction | None:
        return self._heap[0][0] if self._heap else None

    def _expand(self, price: Fraction, ranks: tuple[int, ...]) -> None:
        last = max((k for k, r in enumerate(ranks) if r), default=0)
        active = sum(1 for r in ranks if r)
        cap = self.building.max_active
        for j in range(last, len(ranks)):
            nxt = ranks[j] + 1
            if nxt >= len(self._options[j]):
                continue
            if cap is not None and ranks[j] == 0 and active + 1 > cap:
                continue
            child = ranks[:j] + (nxt,) + ranks[j + 1 :]
            step = self._powers[j][nxt] - self._powers[j][ranks[j]]
            heapq.heappush(self._heap, (price + step, child))

    def __next__(self) -> Mode:
        if not self._heap:
            raise StopIteration
        price, ranks = heapq.heappop(self._heap)
        self._expand(price, ranks)
        choice = tuple(opts[r] for opts, r in zip(self._options, ranks))
        self.materialized += 1
        self.yielded += 1
        return materialize_mode(self.building, choice)


def next_cheapest(cursor: ModeCursor) -> Mode | None:
    """Advance ``cursor``; ``None`` once the space is exhausted."""
    return next(cursor, None)


def modes_up_to(building: BuildingSpec, p, cursor: ModeCursor | None = None) -> list[Mode]:
    """All admissible modes with price at most ``p`` (``p`` may be ``float('inf')``)."""
    if cursor is None:
        cursor = ModeCursor(building)
    out = []
    while True:
        top = cursor.peek_price()
        if top is None or top > p:
            return out
        out.append(next(cursor))


def sorted_enumeration(building: BuildingSpec) -> list[Mode]:
    """Reference order: full enumeration stably sorted on (price, lex rank)."""
    choices = list(all_choices(building))
    choices.sort(key=lambda c: (choice_price(building, c), lex_key(building, c)))
    return [materialize_mode(building, c) for c in choices]


def building_x0_default(building: BuildingSpec) -> tuple[Fraction, ...]:
    return building.comfort.center()
