"""Peak, long-run average and weighted cost optimisation for priced instances.

Modes are consumed cheapest first through a :class:`ModePool`, so the same
search code serves explicit instances and implicit building mode spaces.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Iterator

from .core import (
    FrequencyVector,
    InvalidInstance,
    Mode,
    MmsInstance,
    PeriodicController,
    SafeBox,
    as_fraction,
)
from .implicit import BuildingSpec, ModeCursor
from .lp import Objective, solve
from .synthesis import (
    SafeCore,
    _interior_start,
    _vector,
    build_controller,
    frequency_program,
    safe_core,
)

DEFAULT_EPSILON = Fraction(1, 2**20)


@dataclass(frozen=True)
class CostWeights:
    mu_avg: Fraction
    mu_peak: Fraction

    def __post_init__(self):
        object.__setattr__(self, "mu_avg", as_fraction(self.mu_avg))
        object.__setattr__(self, "mu_peak", as_fraction(self.mu_peak))
        if self.mu_avg < 0 or self.mu_peak < 0:
            raise InvalidInstance("cost weights must be nonnegative")
        if self.mu_avg == 0 and self.mu_peak == 0:
            raise InvalidInstance("at least one cost weight must be positive")

    def score(self, peak, avg) -> Fraction:
        return self.mu_peak * peak + self.mu_avg * avg


@dataclass(frozen=True)
class AvgCost:
    infimum: Fraction
    realizing_vector: FrequencyVector
    optimum_vector: FrequencyVector
    core: SafeCore
    mixing: Fraction

    @property
    def realized(self) -> Fraction:
        return _cost(self.core.instance, self.realizing_vector)


@dataclass(frozen=True)
class OptimizationResult:
    controller: PeriodicController | None = None
    peak: Fraction | None = None
    avg_infimum: Fraction | None = None
    avg_realized: Fraction | None = None
    weighted_infimum: Fraction | None = None
    chosen_peak_level: Fraction | None = None
    frequency: FrequencyVector | None = None
    scale_s: Fraction | None = None
    epsilon: Fraction = DEFAULT_EPSILON
    surviving_modes: tuple[str, ...] = ()

    @property
    def feasible(self) -> bool:
        return self.controller is not None

    @property
    def verdict(self) -> str:
        return "solution" if self.feasible else "no_controller"


def _cost(instance: MmsInstance, f: FrequencyVector) -> Fraction:
    return sum((f[m.id] * m.price for m in instance.modes), Fraction(0))


def _require_prices(modes: Iterable[Mode]) -> None:
    for m in modes:
        if m.price is None:
            raise InvalidInstance(f"mode {m.id!r} has no price")


def min_avg_cost(instance: MmsInstance, box: SafeBox, epsilon=DEFAULT_EPSILON) -> AvgCost | None:
    """Infimum of the long-run average cost over safe controllers using ``instance``'s modes.

    The infimum is taken over the closure of the strict system and may sit on
    a critical boundary; ``realizing_vector`` mixes the optimum with the
    interior witness so that it is strictly feasible and costs at most
    ``epsilon`` more than the infimum.
    """
    _require_prices(instance.modes)
    epsilon = as_fraction(epsilon)
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    core = safe_core(instance, box)
    if core is None:
        return None
    sub = core.instance
    objective = Objective("minimize", {f"f{k}": m.price for k, m in enumerate(sub.modes)})
    lp, _ = frequency_program(sub, box, core.variables, objective)
    out = solve(lp)
    assert out.status == "optimal", out.status
    f_opt = _vector(sub, out.assignment)
    gap = _cost(sub, core.interior) - out.value
    if gap == 0:
        mixing = Fraction(1)
    else:
        mixing = epsilon if gap <= 1 else epsilon / gap
    realizing = f_opt.mix(core.interior, mixing)
    return AvgCost(out.value, realizing, f_opt, core, mixing)


class ModePool:
    """Modes in non-decreasing price order, materialized only on demand."""

    def __init__(self, modes: Iterator[Mode], num_vars: int, canonical: MmsInstance | None = None):
        self._source = iter(modes)
        self._modes: list[Mode] = []
        self._peek: Mode | None = None
        self._done = False
        self.num_vars = num_vars
        self._canonical = canonical
        self._cores: dict = {}
        self._avgs: dict = {}
        self._advance()

    @classmethod
    def explicit(cls, instance: MmsInstance) -> "ModePool":
        _require_prices(instance.modes)
        order = sorted(range(len(instance.modes)), key=lambda k: (instance.modes[k].price, k))
        return cls((instance.modes[k] for k in order), instance.num_vars, instance)

    @classmethod
    def implicit(cls, building: BuildingSpec) -> "ModePool":
        cursor = ModeCursor(building)
        pool = cls(cursor, building.num_zones)
        pool.cursor = cursor
        return pool

    def _advance(self) -> None:
        self._peek = next(self._source, None)
        if self._peek is not None and self._modes and self._peek.price < self._modes[-1].price:
            raise ValueError("mode source is not sorted by price")
        if self._peek is None:
            self._done = True

    def _pull(self) -> bool:
        if self._peek is None:
            return False
        self._modes.append(self._peek)
        self._advance()
        return True

    @property
    def materialized(self) -> int:
        return len(self._modes) + (self._peek is not None)

    def _fill_to(self, p) -> None:
        while self._peek is not None and self._peek.price <= p:
            self._pull()

    def count_upto(self, p) -> int:
        self._fill_to(p)
        return sum(1 for m in self._modes if m.price <= p)

    def level_for_size(self, n: int):
        """Least price ``p`` with ``|M<=p| >= n``, or ``None`` if there are fewer modes."""
        while len(self._modes) < n and self._pull():
            pass
        if len(self._modes) < n:
            return None
        p = self._modes[n - 1].price
        self._fill_to(p)
        return p

    def max_level(self):
        self._fill_to(float("inf"))
        return self._modes[-1].price

    def covers_all(self, p) -> bool:
        self._fill_to(p)
        return self._peek is None and self._modes[-1].price <= p

    def levels_between(self, lo, hi, include_lo=True) -> list[Fraction]:
        self._fill_to(hi)
        levels = sorted({m.price for m in self._modes if m.price <= hi})
        return [q for q in levels if q > lo or (include_lo and q == lo)]

    def instance_upto(self, p) -> MmsInstance:
        self._fill_to(p)
        chosen = [m for m in self._modes if m.price <= p]
        if not chosen:
            raise ValueError(f"no mode costs at most {p}")
        if self._canonical is not None:
            return self._canonical.restrict(m.id for m in chosen)
        return MmsInstance(self.num_vars, tuple(chosen))

    def feasible_upto(self, p, box: SafeBox) -> bool:
        key = self.count_upto(p)
        if key not in self._cores:
            self._cores[key] = safe_core(self.instance_upto(p), box)
        return self._cores[key] is not None

    def avg_upto(self, p, box: SafeBox, epsilon) -> AvgCost | None:
        key = (self.count_upto(p), epsilon)
        if key not in self._avgs:
            self._avgs[key] = min_avg_cost(self.instance_upto(p), box, epsilon)
        return self._avgs[key]


@dataclass(frozen=True)
class PeakResult:
    p_min: Fraction
    mode_set: tuple[str, ...]


def _as_pool(source) -> ModePool:
    if isinstance(source, ModePool):
        return source
    if isinstance(source, BuildingSpec):
        return ModePool.implicit(source)
    if isinstance(source, MmsInstance):
        return ModePool.explicit(source)
    raise TypeError(f"cannot draw modes from {type(source).__name__}")


def min_peak(source, box: SafeBox, x0=None) -> PeakResult | None:
    """Least price ``p`` such that the modes costing at most ``p`` admit a safe controller."""
    pool = _as_pool(source)
    if x0 is not None:
        _interior_start(box, x0)
    size = 1
    below = None  # highest level known infeasible
    while True:
        size *= 2
        p = pool.level_for_size(size)
        if p is None:
            p = pool.max_level()
        if pool.feasible_upto(p, box):
            break
        if pool.covers_all(p):
            return None
        below = p
    levels = pool.levels_between(below if below is not None else -1, p, include_lo=False)
    lo, hi = -1, len(levels) - 1  # levels[hi] feasible; everything at or below lo infeasible
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pool.feasible_upto(levels[mid], box):
            hi = mid
        else:
            lo = mid
    p_min = levels[hi]
    return PeakResult(p_min, pool.instance_upto(p_min).mode_ids)


def _solution(avg: AvgCost, level, box, x0, weights: CostWeights | None, epsilon) -> OptimizationResult:
    core = avg.core
    synth = build_controller(core.instance, box, x0, avg.realizing_vector, core.variables)
    positive = {a.mode for a in synth.controller.period if a.dwell > 0}
    peak = max(core.instance.mode(k).price for k in positive)
    weighted = weights.score(level, avg.infimum) if weights else None
    return OptimizationResult(
        controller=synth.controller,
        peak=peak,
        avg_infimum=avg.infimum,
        avg_realized=avg.realized,
        weighted_infimum=weighted,
        chosen_peak_level=level,
        frequency=avg.realizing_vector,
        scale_s=synth.scale_s,
        epsilon=epsilon,
        surviving_modes=synth.surviving_modes,
    )


def min_peak_then_avg(source, box: SafeBox, x0, epsilon=DEFAULT_EPSILON) -> OptimizationResult:
    """Minimum-peak mode set, then the cheapest average controller within it."""
    x0 = _interior_start(box, x0)
    pool = _as_pool(source)
    peak = min_peak(pool, box)
    if peak is None:
        return OptimizationResult(epsilon=as_fraction(epsilon))
    avg = pool.avg_upto(peak.p_min, box, as_fraction(epsilon))
    return _solution(avg, peak.p_min, box, x0, None, as_fraction(epsilon))


def optimize_weighted(source, box: SafeBox, x0, weights: CostWeights, epsilon=DEFAULT_EPSILON) -> OptimizationResult:
    """Minimise ``mu_peak * peak + mu_avg * avg`` by bracketing the useful peak levels.

    ``source`` is an explicit priced :class:`MmsInstance` or a
    :class:`BuildingSpec` whose modes are generated on the fly.
    """
    x0 = _interior_start(box, x0)
    epsilon = as_fraction(epsilon)
    pool = _as_pool(source)
    peak = min_peak(pool, box)
    if peak is None:
        return OptimizationResult(epsilon=epsilon)
    p = peak.p_min
    if weights.mu_peak == 0:
        # the infimum only falls as modes are added; keep the lowest level reaching its floor
        levels = pool.levels_between(p, pool.max_level())
        floor = pool.avg_upto(levels[-1], box, epsilon).infimum
        lo, hi = -1, len(levels) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if pool.avg_upto(levels[mid], box, epsilon).infimum == floor:
                hi = mid
            else:
                lo = mid
        avg = pool.avg_upto(levels[hi], box, epsilon)
        res = _solution(avg, levels[hi], box, x0, weights, epsilon)
        return replace(res, weighted_infimum=weights.mu_avg * avg.infimum)
    base = pool.avg_upto(p, box, epsilon)
    if weights.mu_avg == 0:
        return _solution(base, p, box, x0, weights, epsilon)
    ratio = weights.mu_avg / weights.mu_peak
    bound = p + ratio * base.infimum
    while True:
        new = p + ratio * (base.infimum - pool.avg_upto(bound, box, epsilon).infimum)
        if new >= bound:
            break
        bound = new
    best_level, best_avg, best_score = None, None, None
    for q in pool.levels_between(p, bound):
        avg = pool.avg_upto(q, box, epsilon)
        score = weights.score(q, avg.infimum)
        if best_score is None or score < best_score:
            best_level, best_avg, best_score = q, avg, score
    return _solution(best_avg, best_level, box, x0, weights, epsilon)


def optimize_full_scan(instance: MmsInstance, box: SafeBox, x0, weights: CostWeights, epsilon=DEFAULT_EPSILON) -> OptimizationResult:
    """Evaluate every distinct price level; the reference for explicit instances."""
    x0 = _interior_start(box, x0)
    epsilon = as_fraction(epsilon)
    pool = ModePool.explicit(instance)
    best = None
    for q in pool.levels_between(-1, pool.max_level(), include_lo=False):
        avg = pool.avg_upto(q, box, epsilon)
        if avg is None:
            continue
        peak_term = q if weights.mu_peak else Fraction(0)
        score = weights.score(peak_term, avg.infimum)
        if best is None or score < best[0]:
            best = (score, q, avg)
    if best is None:
        return OptimizationResult(epsilon=epsilon)
    score, q, avg = best
    return replace(_solution(avg, q, box, x0, weights, epsilon), weighted_infimum=score)


def avg_cost_of(controller: PeriodicController, instance: MmsInstance) -> Fraction:
    """Long-run average price of a periodic controller (its period's weighted mean)."""
    total = controller.period_length
    if total == 0:
        raise ValueError("period has zero total time")
    acc = Fraction(0)
    for act in controller.period:
        price = instance.mode(act.mode).price
        if price is None:
            raise InvalidInstance(f"mode {act.mode!r} has no price")
        acc += price * act.dwell
    return acc / total


def peak_cost_of(controller: PeriodicController, instance: MmsInstance) -> Fraction:
    used = [a.mode for a in (*controller.prefix, *controller.period) if a.dwell > 0]
    return max(instance.mode(k).price for k in used)
