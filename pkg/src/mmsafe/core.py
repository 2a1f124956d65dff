"""Domain types and the closed-form dynamics of linear-rate multi-mode systems.

Every variable evolves as ``dx/dt = b - a*x`` with ``a > 0`` while the system
stays in one mode, so a segment of length ``t`` has the exact solution

    x(t) = b/a + (x0 - b/a) * exp(-a*t)

Instance data is exact (:class:`fractions.Fraction`).  The exponential is
irrational, so flows are evaluated with :mod:`mpmath` at a configurable
precision (``MMS_PRECISION`` bits, default 80).
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

import mpmath

Rational = Fraction
Number = Union[Fraction, int, "mpmath.mpf"]
StateVector = Sequence[Number]

DEFAULT_PRECISION = 80


def _make_context() -> mpmath.MPContext:
    ctx = mpmath.MPContext()
    ctx.prec = int(os.environ.get("MMS_PRECISION", DEFAULT_PRECISION))
    return ctx


mp = _make_context()


def set_precision(bits: int) -> None:
    """Change the working precision (in bits) used for flow evaluation."""
    if bits < 53:
        raise ValueError("precision must be at least 53 bits")
    mp.prec = int(bits)


class InvalidInstance(ValueError):
    """Raised when an instance, box or vector violates its invariants."""


def as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, (int, str)):
        return Fraction(value)
    raise TypeError(f"expected an exact rational, got {type(value).__name__}")


def to_mpf(value):
    """Convert a Fraction/int/float/mpf into an mpf of the working context."""
    if isinstance(value, Fraction):
        return mp.mpf(value.numerator) / value.denominator
    return mp.mpf(value)


@dataclass(frozen=True)
class Mode:
    """One joint actuator setting: per-variable decay rates ``a`` and drives ``b``."""

    id: str
    a: tuple[Fraction, ...]
    b: tuple[Fraction, ...]
    price: Fraction | None = None

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(as_fraction(v) for v in self.a))
        object.__setattr__(self, "b", tuple(as_fraction(v) for v in self.b))
        if self.price is not None:
            object.__setattr__(self, "price", as_fraction(self.price))
            if self.price < 0:
                raise InvalidInstance(f"mode {self.id!r}: price must be nonnegative")
        if len(self.a) != len(self.b):
            raise InvalidInstance(f"mode {self.id!r}: a and b have different lengths")
        for i, ai in enumerate(self.a):
            if ai <= 0:
                raise InvalidInstance(
                    f"mode {self.id!r}: decay rate a[{i}] = {ai} must be strictly positive"
                )

    def equilibrium(self, i: int) -> Fraction:
        return self.b[i] / self.a[i]

    def drift(self, i: int, x):
        """Instantaneous derivative ``b_i - a_i * x`` of variable ``i``."""
        return self.b[i] - self.a[i] * x


@dataclass(frozen=True)
class MmsInstance:
    num_vars: int
    modes: tuple[Mode, ...]

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if self.num_vars < 1:
            raise InvalidInstance("num_vars must be a positive integer")
        if not self.modes:
            raise InvalidInstance("an instance needs at least one mode")
        seen = set()
        for m in self.modes:
            if len(m.a) != self.num_vars:
                raise InvalidInstance(
                    f"mode {m.id!r} has {len(m.a)} coefficient pairs, expected {self.num_vars}"
                )
            if m.id in seen:
                raise InvalidInstance(f"duplicate mode id {m.id!r}")
            seen.add(m.id)
        object.__setattr__(self, "_index", {m.id: k for k, m in enumerate(self.modes)})

    @property
    def mode_ids(self) -> tuple[str, ...]:
        return tuple(m.id for m in self.modes)

    @property
    def priced(self) -> bool:
        return all(m.price is not None for m in self.modes)

    def mode(self, mode_id: str) -> Mode:
        try:
            return self.modes[self._index[mode_id]]
        except KeyError:
            raise KeyError(f"unknown mode {mode_id!r}") from None

    def __contains__(self, mode_id) -> bool:
        return mode_id in self._index

    def position(self, mode_id: str) -> int:
        return self._index[mode_id]

    def restrict(self, mode_ids: Iterable[str]) -> "MmsInstance":
        """Sub-instance over ``mode_ids``, keeping the canonical mode order."""
        keep = set(mode_ids)
        unknown = keep - set(self._index)
        if unknown:
            raise KeyError(f"unknown modes {sorted(unknown)}")
        return MmsInstance(self.num_vars, tuple(m for m in self.modes if m.id in keep))


@dataclass(frozen=True)
class SafeBox:
    l: tuple[Fraction, ...]
    u: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "l", tuple(as_fraction(v) for v in self.l))
        object.__setattr__(self, "u", tuple(as_fraction(v) for v in self.u))
        if len(self.l) != len(self.u):
            raise InvalidInstance("box bounds have different dimensions")
        for i, (lo, hi) in enumerate(zip(self.l, self.u)):
            if not lo < hi:
                raise InvalidInstance(f"box bound {i}: need l < u, got [{lo}, {hi}]")

    @property
    def dim(self) -> int:
        return len(self.l)

    def contains(self, x: StateVector, guard=0) -> bool:
        return all(lo - guard <= xi <= hi + guard for lo, xi, hi in zip(self.l, x, self.u))

    def strictly_contains(self, x: StateVector) -> bool:
        return all(lo < xi < hi for lo, xi, hi in zip(self.l, x, self.u))

    def center(self) -> tuple[Fraction, ...]:
        return tuple((lo + hi) / 2 for lo, hi in zip(self.l, self.u))


@dataclass(frozen=True)
class FrequencyVector:
    """Nonnegative per-mode weights summing to exactly one."""

    weights: Mapping[str, Fraction]

    def __post_init__(self):
        w = {k: as_fraction(v) for k, v in dict(self.weights).items()}
        if any(v < 0 for v in w.values()):
            raise InvalidInstance("frequency weights must be nonnegative")
        if sum(w.values(), Fraction(0)) != 1:
            raise InvalidInstance(f"frequency weights sum to {sum(w.values())}, not 1")
        object.__setattr__(self, "weights", w)

    def __getitem__(self, mode_id: str) -> Fraction:
        return self.weights.get(mode_id, Fraction(0))

    def support(self) -> tuple[str, ...]:
        return tuple(k for k, v in self.weights.items() if v > 0)

    def check_against(self, instance: MmsInstance) -> None:
        for k in self.weights:
            if k not in instance:
                raise InvalidInstance(f"frequency vector names unknown mode {k!r}")

    @classmethod
    def of(cls, instance: MmsInstance, values: Sequence) -> "FrequencyVector":
        """Build from a list aligned with ``instance.modes``."""
        if len(values) != len(instance.modes):
            raise InvalidInstance("one weight per mode expected")
        return cls({m.id: as_fraction(v) for m, v in zip(instance.modes, values)})

    def mix(self, other: "FrequencyVector", weight: Fraction) -> "FrequencyVector":
        """``(1 - weight) * self + weight * other``."""
        keys = list(dict.fromkeys([*self.weights, *other.weights]))
        return FrequencyVector(
            {k: (1 - weight) * self[k] + weight * other[k] for k in keys}
        )


@dataclass(frozen=True)
class TimedAction:
    mode: str
    dwell: Fraction

    def __post_init__(self):
        object.__setattr__(self, "dwell", as_fraction(self.dwell))
        if self.dwell < 0:
            raise InvalidInstance("dwell times are nonnegative")


@dataclass(frozen=True)
class PeriodicController:
    """A finite prefix followed by an infinitely repeated period."""

    period: tuple[TimedAction, ...]
    prefix: tuple[TimedAction, ...] = ()
    min_dwell: Fraction = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "period", tuple(self.period))
        object.__setattr__(self, "prefix", tuple(self.prefix))
        if not self.period:
            raise InvalidInstance("a periodic controller needs a nonempty period")
        if not any(act.dwell > 0 for act in self.period):
            raise InvalidInstance("period has no positive dwell (Zeno controller)")
        positive = [act.dwell for act in (*self.prefix, *self.period) if act.dwell > 0]
        object.__setattr__(self, "min_dwell", min(positive))

    @property
    def period_length(self) -> Fraction:
        return sum((act.dwell for act in self.period), Fraction(0))

    def mode_sequence(self, periods: int = 1) -> list[str]:
        return [a.mode for a in self.prefix] + [a.mode for a in self.period] * periods


def flow_segment(x0: StateVector, mode: Mode, t) -> tuple:
    """State after staying ``t`` time units in ``mode`` starting from ``x0``."""
    if len(x0) != len(mode.a):
        raise InvalidInstance(f"state has {len(x0)} entries, mode has {len(mode.a)}")
    if t < 0:
        raise ValueError("segment duration must be nonnegative")
    if t == 0:
        return tuple(x0)
    tm = to_mpf(t)
    out = []
    for xi, ai, bi in zip(x0, mode.a, mode.b):
        eq = to_mpf(bi) / to_mpf(ai)
        out.append(eq + (to_mpf(xi) - eq) * mp.exp(-to_mpf(ai) * tm))
    return tuple(out)


def eval_F(instance: MmsInstance, f: FrequencyVector, i: int, y) -> Fraction:
    """Exact value of ``sum_m f(m) * (b_i^m - a_i^m * y)``."""
    if not 0 <= i < instance.num_vars:
        raise IndexError(f"variable index {i} out of range")
    y = as_fraction(y)
    f.check_against(instance)
    total = Fraction(0)
    for m in instance.modes:
        w = f[m.id]
        if w:
            total += w * (m.b[i] - m.a[i] * y)
    return total


class VectorKind(enum.Enum):
    NOT_GOOD = "not_good"
    GOOD = "good_with_criticals"
    IMPLEMENTABLE = "implementable"


@dataclass(frozen=True)
class Classification:
    kind: VectorKind
    criticals: tuple[tuple[int, str], ...] = ()

    @property
    def is_good(self) -> bool:
        return self.kind is not VectorKind.NOT_GOOD

    @property
    def is_implementable(self) -> bool:
        return self.kind is VectorKind.IMPLEMENTABLE


def classify_vector(instance: MmsInstance, box: SafeBox, f: FrequencyVector) -> Classification:
    if box.dim != instance.num_vars:
        raise InvalidInstance("box dimension does not match the instance")
    criticals = []
    for i in range(instance.num_vars):
        lo = eval_F(instance, f, i, box.l[i])
        hi = eval_F(instance, f, i, box.u[i])
        if lo < 0 or hi > 0:
            return Classification(VectorKind.NOT_GOOD)
        if lo == 0:
            criticals.append((i, "lower"))
        if hi == 0:
            criticals.append((i, "upper"))
    used = [instance.mode(k) for k in f.support()]
    for i, side in criticals:
        bound = box.l[i] if side == "lower" else box.u[i]
        if any(m.equilibrium(i) != bound for m in used):
            return Classification(VectorKind.GOOD, tuple(criticals))
    return Classification(VectorKind.IMPLEMENTABLE, tuple(criticals))
