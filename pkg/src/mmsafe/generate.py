"""Seeded random buildings for the lazy-versus-optimal comparison.

Each zone loses heat towards the outside temperature at rate ``a``; its
heater delivers ``gain * power`` per hour, so a setting has
``b = a * T_out + gain * power``.  The gain is fixed per zone so that the
weakest setting settles at a sampled temperature (above the comfort band by
default, so every zone needs its heater only part of the time).
Every draw goes through one ``random.Random(seed)`` (CPython's Mersenne
Twister, MT19937), named in the file header.
"""

from __future__ import annotations

import random
from dataclasses import asdict, dataclass, fields
from fractions import Fraction

from .core import SafeBox
from .implicit import BuildingSpec, Setting, ZoneSpec

PRNG_NAME = "python random.Random (MT19937)"


@dataclass(frozen=True)
class GeneratorConfig:
    zones: int = 8
    settings: int = 6
    decay_range: tuple[str, str] = ("0.2", "0.4")  # 1/h
    decay_grain: str = "0.01"
    # weakest setting settles above the band; with a <= 0.4 this keeps the
    # temperature change per 180 s step below the 5% rule bands
    first_setting_equilibrium: tuple[str, str] = ("26", "30")  # degrees C
    equilibrium_grain: str = "0.1"
    base_power_choices: tuple[str, ...] = ("1", "1.5", "2")  # kW
    power_step_choices: tuple[str, ...] = ("0.5", "1")  # kW between settings
    outside_temp: str = "10"
    comfort: tuple[str, str] = ("18", "22")
    start_fraction: str = "0.25"  # x0 = l + fraction * (u - l)
    max_active: int | None = None

    def __post_init__(self):
        if self.zones < 1:
            raise ValueError("zones must be positive")
        if self.settings < 0:
            raise ValueError("settings must be nonnegative")
        lo, hi = (Fraction(v) for v in self.comfort)
        if not lo < hi:
            raise ValueError("comfort band needs l < u")
        if not 0 < Fraction(self.start_fraction) < 1:
            raise ValueError("start_fraction must lie in (0, 1)")
        if Fraction(self.decay_range[0]) <= 0:
            raise ValueError("decay rates must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "GeneratorConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown generator options: {sorted(unknown)}")
        cleaned = {}
        for k, v in doc.items():
            cleaned[k] = tuple(str(x) for x in v) if isinstance(v, list) else (str(v) if isinstance(v, float) else v)
        return cls(**cleaned)

    def as_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def _grid(rng: random.Random, lo: str, hi: str, grain: str) -> Fraction:
    lo_q, hi_q, g = Fraction(lo), Fraction(hi), Fraction(grain)
    steps = int((hi_q - lo_q) / g)
    return lo_q + g * rng.randint(0, steps)


def generate_building(config: GeneratorConfig, seed: int) -> tuple[BuildingSpec, tuple[Fraction, ...], dict]:
    """Return ``(building, x0, header)``; identical inputs give identical output."""
    rng = random.Random(seed)
    t_out = Fraction(config.outside_temp)
    zones = []
    for _ in range(config.zones):
        a = _grid(rng, *config.decay_range, config.decay_grain)
        eq1 = _grid(rng, *config.first_setting_equilibrium, config.equilibrium_grain)
        base = Fraction(rng.choice(config.base_power_choices))
        step = Fraction(rng.choice(config.power_step_choices))
        gain = a * (eq1 - t_out) / base
        settings = tuple(
            Setting(a, a * t_out + gain * (base + k * step), base + k * step) for k in range(config.settings)
        )
        zones.append(ZoneSpec(a, a * t_out, settings))
    lo, hi = (Fraction(v) for v in config.comfort)
    comfort = SafeBox((lo,) * config.zones, (hi,) * config.zones)
    building = BuildingSpec(tuple(zones), comfort, config.max_active)
    x0 = tuple(lo + Fraction(config.start_fraction) * (hi - lo) for _ in range(config.zones))
    header = {"prng": PRNG_NAME, "seed": seed, "config": config.as_dict()}
    return building, x0, header
