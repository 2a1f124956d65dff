"""Trajectory simulation, periodic safety certificates and the lazy baseline.

For a controller that follows timed actions exactly, every variable moves
monotonically inside each segment, so checking the box at the switch
points is enough.  Over one full period each variable undergoes an affine
map ``x -> alpha * x + beta`` with ``0 < alpha < 1``; the switch-point
values at a fixed phase therefore converge monotonically to
``beta / (1 - alpha)``, which gives a finite certificate for infinite runs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .core import (
    InvalidInstance,
    MmsInstance,
    PeriodicController,
    SafeBox,
    TimedAction,
    as_fraction,
    flow_segment,
    mp,
    to_mpf,
)
from .implicit import BuildingSpec, choice_price, materialize_mode, parse_choice_id
from .optimizer import DEFAULT_EPSILON, min_peak_then_avg

DEFAULT_GUARD = 1e-9


@dataclass(frozen=True)
class Violation:
    time: Fraction
    variable: int
    bound: str  # "lower" or "upper"
    value: object


@dataclass
class Trajectory:
    switch_points: list = field(default_factory=list)  # (time, state, mode entered)
    samples: list = field(default_factory=list)  # (time, state)
    safe: bool = True
    first_violation: Violation | None = None
    guard: float = DEFAULT_GUARD

    @property
    def final_state(self):
        return self.switch_points[-1][1] if self.switch_points else None


@dataclass(frozen=True)
class RunStats:
    peak_power: Fraction
    avg_power: Fraction
    mode_switch_count: int
    min_dwell_observed: Fraction | None
    duration: Fraction

    def as_dict(self) -> dict:
        return {
            "peak_power": float(self.peak_power),
            "avg_power": float(self.avg_power),
            "mode_switch_count": self.mode_switch_count,
            "min_dwell_observed": None if self.min_dwell_observed is None else float(self.min_dwell_observed),
            "duration": float(self.duration),
        }


def _find_violation(box: SafeBox, x, t, guard) -> Violation | None:
    g = to_mpf(guard)
    for i, xi in enumerate(x):
        xi = to_mpf(xi)
        if xi < to_mpf(box.l[i]) - g:
            return Violation(t, i, "lower", xi)
        if xi > to_mpf(box.u[i]) + g:
            return Violation(t, i, "upper", xi)
    return None


class _Stepper:
    """Caches ``exp(-a * dwell)`` per (mode, dwell) pair for repeated periods."""

    def __init__(self, instance: MmsInstance):
        self.instance = instance
        self._cache = {}

    def factors(self, mode_id: str, dwell: Fraction):
        key = (mode_id, dwell)
        hit = self._cache.get(key)
        if hit is None:
            m = self.instance.mode(mode_id)
            d = to_mpf(dwell)
            hit = [
                (mp.exp(-to_mpf(ai) * d), to_mpf(bi) / to_mpf(ai)) for ai, bi in zip(m.a, m.b)
            ]
            self._cache[key] = hit
        return hit

    def step(self, x, mode_id: str, dwell: Fraction):
        if dwell == 0:
            return tuple(x)
        return tuple(eq + (to_mpf(xi) - eq) * e for xi, (e, eq) in zip(x, self.factors(mode_id, dwell)))


def _actions(controller: PeriodicController):
    yield from controller.prefix
    while True:
        yield from controller.period


def run(
    instance: MmsInstance,
    box: SafeBox,
    x0,
    controller: PeriodicController,
    *,
    periods: int | None = None,
    time=None,
    switches: int | None = None,
    sample_step=None,
    guard=DEFAULT_GUARD,
    keep_points: bool = True,
) -> Trajectory:
    """Follow ``controller`` from ``x0`` and check the box at every switch point.

    Exactly one horizon must be given: ``periods`` (full periods after the
    prefix), ``time`` (total duration; the last action is truncated) or
    ``switches`` (number of recorded switch points, the initial one included).
    With ``sample_step`` the state is also sampled on a uniform time grid.
    """
    given = [h is not None for h in (periods, time, switches)]
    if sum(given) != 1:
        raise ValueError("give exactly one of periods, time, switches")
    if len(x0) != instance.num_vars or box.dim != instance.num_vars:
        raise InvalidInstance("dimension mismatch between state, box and instance")
    if periods is not None:
        if periods <= 0:
            raise ValueError("horizon must be positive")
        n_actions = len(controller.prefix) + periods * len(controller.period)
        t_end = None
    elif switches is not None:
        if switches <= 0:
            raise ValueError("horizon must be positive")
        n_actions = switches - 1
        t_end = None
    else:
        t_end = as_fraction(time)
        if t_end <= 0:
            raise ValueError("horizon must be positive")
        n_actions = None

    step = _Stepper(instance)
    seq = _actions(controller)
    traj = Trajectory(guard=guard)
    x = tuple(x0)
    t = Fraction(0)
    nxt = next(seq)
    traj.switch_points.append((t, x, nxt.mode))
    _record_violation(traj, box, x, t, guard)
    h = None if sample_step is None else as_fraction(sample_step)
    next_sample = Fraction(0)
    done = 0
    while True:
        if n_actions is not None and done >= n_actions:
            break
        if t_end is not None and t >= t_end:
            break
        act = nxt
        dwell = act.dwell if t_end is None else min(act.dwell, t_end - t)
        if h is not None:
            while next_sample <= t + dwell and (t_end is None or next_sample <= t_end):
                xs = flow_segment(x, instance.mode(act.mode), next_sample - t)
                traj.samples.append((next_sample, xs))
                _record_violation(traj, box, xs, next_sample, guard)
                next_sample += h
        x = step.step(x, act.mode, dwell)
        t += dwell
        done += 1
        nxt = next(seq)
        if keep_points:
            traj.switch_points.append((t, x, nxt.mode))
        else:
            traj.switch_points[-1:] = [(t, x, nxt.mode)]
        _record_violation(traj, box, x, t, guard)
    return traj


def _record_violation(traj: Trajectory, box, x, t, guard) -> None:
    if traj.first_violation is not None:
        return
    v = _find_violation(box, x, t, guard)
    if v is not None:
        traj.safe = False
        traj.first_violation = v


def eq1_state(instance: MmsInstance, x0, actions: Sequence[TimedAction]):
    """State after ``actions`` via the k-step closed form (one exponential of the summed exponent)."""
    out = []
    for i, xi in enumerate(x0):
        # x_k = x0 * exp(-S_k) + sum_j (b_j/a_j) * (1 - exp(-a_j t_j)) * exp(-(S_k - S_j))
        exps = [to_mpf(instance.mode(a.mode).a[i]) * to_mpf(a.dwell) for a in actions]
        s_total = mp.fsum(exps)
        acc = to_mpf(xi) * mp.exp(-s_total)
        tail = s_total
        for a, e in zip(actions, exps):
            m = instance.mode(a.mode)
            tail -= e
            acc += (to_mpf(m.b[i]) / to_mpf(m.a[i])) * (1 - mp.exp(-e)) * mp.exp(-tail)
        out.append(acc)
    return tuple(out)


@dataclass(frozen=True)
class PhaseMap:
    phase: int
    variable: int
    alpha: object
    beta: object
    # beta written as ref * (1 - alpha) + offset, so shared equilibria stay exact
    ref: object = 0
    offset: object = None

    @property
    def fixed_point(self):
        if self.offset is None:
            return self.beta / (1 - self.alpha)
        return self.ref + self.offset / (1 - self.alpha)


def period_map(instance: MmsInstance, controller: PeriodicController, i: int, phase: int = 0) -> PhaseMap:
    """Affine map of variable ``i`` over one period started at action ``phase``."""
    period = controller.period
    alpha, beta, off = mp.mpf(1), mp.mpf(0), mp.mpf(0)
    ref = None
    for act in period[phase:] + period[:phase]:
        if act.dwell == 0:
            continue
        m = instance.mode(act.mode)
        e = mp.exp(-to_mpf(m.a[i]) * to_mpf(act.dwell))
        eq = m.equilibrium(i)
        if ref is None:
            ref = eq
        alpha, beta = e * alpha, e * beta + to_mpf(eq) * (1 - e)
        off = e * off + to_mpf(eq - ref) * (1 - e)
    return PhaseMap(phase, i, alpha, beta, to_mpf(ref or 0), off)


def phase_maps(instance: MmsInstance, controller: PeriodicController) -> list[PhaseMap]:
    """Period maps for every phase and variable.

    All phases share ``alpha``; the phase-``k`` fixed point is the phase-0
    fixed point pushed through the first ``k`` actions.
    """
    step = _Stepper(instance)
    base = [period_map(instance, controller, i) for i in range(instance.num_vars)]
    fp = tuple(pm.fixed_point for pm in base)
    out = []
    for k, act in enumerate(controller.period):
        for i, pm in enumerate(base):
            out.append(PhaseMap(k, i, pm.alpha, fp[i] * (1 - pm.alpha), fp[i], mp.mpf(0)))
        fp = step.step(fp, act.mode, act.dwell)
    return out


@dataclass(frozen=True)
class Certificate:
    maps: tuple[PhaseMap, ...]
    first_period: Trajectory
    ok: bool
    reason: str = ""

    def fixed_points(self, phase: int = 0) -> list:
        return [p.fixed_point for p in self.maps if p.phase == phase]


def periodic_safety(
    instance: MmsInstance, box: SafeBox, x0, controller: PeriodicController, guard=DEFAULT_GUARD
) -> Certificate:
    """Decide safety for all time.

    The prefix and the first period are simulated exactly; afterwards each
    phase sequence moves monotonically from its first value towards the
    phase fixed point, so both ends lying in the box covers every later
    switch point.
    """
    first = run(instance, box, x0, controller, periods=1, guard=guard)
    maps = phase_maps(instance, controller)
    ok = first.safe
    reason = "" if ok else "unsafe during prefix or first period"
    g = to_mpf(guard)
    for pm in maps:
        i = pm.variable
        if not 0 < pm.alpha < 1:
            ok, reason = False, f"no contraction on variable {i}"
            break
        fp = pm.fixed_point
        if ok and not (to_mpf(box.l[i]) - g <= fp <= to_mpf(box.u[i]) + g):
            ok, reason = False, f"fixed point of variable {i} at phase {pm.phase} leaves the box"
            break
    return Certificate(tuple(maps), first, ok, reason)


class PeriodicEvaluator:
    """Exact states of a periodic controller at arbitrary times, skipping whole periods."""

    def __init__(self, instance: MmsInstance, controller: PeriodicController):
        self.instance = instance
        self.controller = controller
        self.step = _Stepper(instance)
        self.maps = [period_map(instance, controller, i) for i in range(instance.num_vars)]
        self.length = controller.period_length

    def state_at(self, x0, t):
        t = as_fraction(t)
        x = tuple(x0)
        for act in self.controller.prefix:
            if t <= act.dwell:
                return self.step.step(x, act.mode, t)
            x = self.step.step(x, act.mode, act.dwell)
            t -= act.dwell
        whole = int(t // self.length)
        if whole:
            out = []
            for xi, pm in zip(x, self.maps):
                ak = pm.alpha**whole
                out.append(ak * to_mpf(xi) + pm.beta * (1 - ak) / (1 - pm.alpha))
            x = tuple(out)
            t -= whole * self.length
        for act in self.controller.period:
            if t <= act.dwell:
                return self.step.step(x, act.mode, t)
            x = self.step.step(x, act.mode, act.dwell)
            t -= act.dwell
        return x


def state_at(instance: MmsInstance, controller: PeriodicController, x0, t):
    """Exact state at time ``t`` using the period map to skip whole periods."""
    return PeriodicEvaluator(instance, controller).state_at(x0, t)


def controller_stats(instance: MmsInstance, controller: PeriodicController, duration) -> RunStats:
    """Exact power figures of ``controller`` over ``[0, duration]``."""
    duration = as_fraction(duration)
    acts = []
    t = Fraction(0)
    for act in controller.prefix:
        if t >= duration:
            break
        d = min(act.dwell, duration - t)
        acts.append((act.mode, d))
        t += d
    energy = sum((instance.mode(m).price * d for m, d in acts), Fraction(0))
    remaining = duration - t
    if remaining > 0:
        length = controller.period_length
        whole = int(remaining // length)
        per = sum((instance.mode(a.mode).price * a.dwell for a in controller.period), Fraction(0))
        energy += whole * per
        rest = remaining - whole * length
        if whole:
            acts.extend((a.mode, a.dwell) for a in controller.period)
        for a in controller.period:
            if rest <= 0:
                break
            d = min(a.dwell, rest)
            acts.append((a.mode, d))
            energy += instance.mode(a.mode).price * d
            rest -= d
        n_per = len(controller.period)
        switches = len(controller.prefix) + whole * n_per + n_per
    else:
        switches = len(acts)
    used = [instance.mode(m).price for m, d in acts if d > 0]
    dwells = [a.dwell for a in (*controller.prefix, *controller.period) if a.dwell > 0]
    return RunStats(max(used), energy / duration, switches, min(dwells), duration)


def trajectory_stats(instance: MmsInstance, traj: Trajectory) -> RunStats:
    """Power figures from recorded switch points (prices must be present)."""
    pts = traj.switch_points
    energy, peak, switches, min_dwell = Fraction(0), Fraction(0), 0, None
    for (t0, _, mode), (t1, _, _) in zip(pts, pts[1:]):
        d = t1 - t0
        if d <= 0:
            continue
        price = instance.mode(mode).price
        energy += price * d
        peak = max(peak, price)
        switches += 1
        min_dwell = d if min_dwell is None else min(min_dwell, d)
    duration = pts[-1][0] - pts[0][0]
    avg = energy / duration if duration else Fraction(0)
    return RunStats(peak, avg, switches, min_dwell, duration)


@dataclass(frozen=True)
class LazyConfig:
    top: Fraction = Fraction(5, 100)
    bottom: Fraction = Fraction(5, 100)
    release: Fraction = Fraction(10, 100)
    step: Fraction = Fraction(1, 20)  # 180 s in hours
    hot_action: str = "off"  # or "lowest_on": weakest active setting in the hot band

    def __post_init__(self):
        for name in ("top", "bottom", "release", "step"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))
        if self.step <= 0:
            raise ValueError("sampling step must be positive")
        if self.hot_action not in ("off", "lowest_on"):
            raise ValueError("hot_action is 'off' or 'lowest_on'")


def _least_power(zone, pred):
    for k in sorted(range(len(zone.settings)), key=lambda k: (zone.settings[k].power, k)):
        if pred(zone.settings[k]):
            return k
    return None


def lazy_controller_step(
    building: BuildingSpec, state, current_choice, config: LazyConfig = LazyConfig()
) -> tuple[tuple, bool]:
    """Threshold rules of the lazy baseline; returns ``(choice, flagged)``.

    ``flagged`` is set when a cold zone has no setting able to stop it cooling
    (its strongest setting is used then).
    """
    choice = list(current_choice)
    box = building.comfort
    flagged = False
    cold = []
    for i, zone in enumerate(building.zones):
        lo, hi = box.l[i], box.u[i]
        width = hi - lo
        x = to_mpf(state[i])
        if x >= to_mpf(hi - config.top * width):
            if choice[i] is not None:
                choice[i] = None if config.hot_action == "off" else _least_power(zone, lambda s: True)
        elif x <= to_mpf(lo + config.bottom * width) and zone.settings:
            cold.append(i)
    engage = {}
    for i in cold:
        zone = building.zones[i]
        x = to_mpf(state[i])
        k = _least_power(zone, lambda s: to_mpf(s.b) - to_mpf(s.a) * x >= 0)
        if k is None:
            k = max(range(len(zone.settings)), key=lambda j: (zone.settings[j].b / zone.settings[j].a, -j))
            flagged = True
        if choice[i] != k:
            engage[i] = k
    if engage:
        for i, zone in enumerate(building.zones):
            width = box.u[i] - box.l[i]
            if i not in engage and to_mpf(state[i]) > to_mpf(box.l[i] + config.release * width):
                choice[i] = None
        for i, k in engage.items():
            choice[i] = k
    return tuple(choice), flagged


@dataclass
class LazyRun:
    trajectory: Trajectory
    stats: RunStats
    modes_used: set
    flagged: bool


def run_lazy(building: BuildingSpec, x0, hours, config: LazyConfig = LazyConfig(), guard=DEFAULT_GUARD) -> LazyRun:
    """Simulate the lazy controller on its sampling grid, all heaters off at start."""
    duration = as_fraction(hours)
    box = building.comfort
    choice = (None,) * building.num_zones
    x = tuple(x0)
    t = Fraction(0)
    traj = Trajectory(guard=guard)
    energy, peak = Fraction(0), Fraction(0)
    switches, flagged = 0, False
    used = set()
    last_switch, min_dwell = Fraction(0), None
    _record_violation(traj, box, x, t, guard)
    while t < duration:
        new, flag = lazy_controller_step(building, x, choice, config)
        flagged |= flag
        if new != choice:
            if t > 0:
                switches += 1
                d = t - last_switch
                min_dwell = d if min_dwell is None else min(min_dwell, d)
            last_switch = t
            choice = new
        mode = materialize_mode(building, choice) if building.max_active is None else _uncapped(building, choice)
        used.add(mode.id)
        traj.switch_points.append((t, x, mode.id))
        traj.samples.append((t, x))
        d = min(config.step, duration - t)
        power = choice_price(building, choice)
        energy += power * d
        if d > 0:
            peak = max(peak, power)
        x = flow_segment(x, mode, d)
        t += d
        _record_violation(traj, box, x, t, guard)
    traj.switch_points.append((t, x, None))
    traj.samples.append((t, x))
    stats = RunStats(peak, energy / duration, switches, min_dwell, duration)
    return LazyRun(traj, stats, used, flagged)


def _uncapped(building: BuildingSpec, choice):
    return materialize_mode(BuildingSpec(building.zones, building.comfort), choice)


@dataclass(frozen=True)
class Comparison:
    optimal: RunStats
    lazy: RunStats
    peak_saving: float
    avg_saving: float
    optimal_safe: bool
    lazy_safe: bool
    lazy_flagged: bool
    result: object = None

    def as_dict(self) -> dict:
        return {
            "optimal": self.optimal.as_dict(),
            "lazy": self.lazy.as_dict(),
            "savings": {"peak_percent": self.peak_saving, "avg_percent": self.avg_saving},
            "optimal_safe": self.optimal_safe,
            "lazy_safe": self.lazy_safe,
            "lazy_flagged": self.lazy_flagged,
        }


def saving(lazy_value, optimal_value) -> float:
    """Percentage saved by the optimal controller relative to the lazy one."""
    if lazy_value == 0:
        return 0.0
    return float((Fraction(lazy_value) - Fraction(optimal_value)) / Fraction(lazy_value)) * 100


def sampled_safety(instance, box, x0, controller, duration, step, guard=DEFAULT_GUARD) -> bool:
    """Check the box on a uniform grid using exact period skipping."""
    duration, step = as_fraction(duration), as_fraction(step)
    ev = PeriodicEvaluator(instance, controller)
    t = Fraction(0)
    while t <= duration:
        if _find_violation(box, ev.state_at(x0, t), t, guard):
            return False
        t += step
    return True


def compare(
    source,
    box: SafeBox,
    x0,
    hours=9,
    step=Fraction(1, 20),
    epsilon=None,
    config: LazyConfig | None = None,
    guard=DEFAULT_GUARD,
) -> Comparison:
    """Minimum-peak / minimum-average controller against the lazy baseline.

    ``source`` is a :class:`BuildingSpec`; raises ``ValueError`` when no safe
    controller exists.
    """
    if not isinstance(source, BuildingSpec):
        raise TypeError("compare needs a building (the lazy rules act on heater settings)")
    config = config or LazyConfig(step=step)
    res = min_peak_then_avg(source, box, x0, DEFAULT_EPSILON if epsilon is None else epsilon)
    if not res.feasible:
        raise ValueError("synthesis infeasible: no safe controller to compare")
    ctl = res.controller
    modes = {a.mode for a in ctl.period}
    inst = MmsInstance(box.dim, tuple(materialize_mode(source, parse_choice_id(k)) for k in sorted(modes)))
    cert = periodic_safety(inst, box, x0, ctl, guard)
    opt_safe = cert.ok and sampled_safety(inst, box, x0, ctl, hours, config.step, guard)
    opt_stats = controller_stats(inst, ctl, hours)
    lazy = run_lazy(source, x0, hours, config, guard)
    return Comparison(
        opt_stats,
        lazy.stats,
        saving(lazy.stats.peak_power, opt_stats.peak_power),
        saving(lazy.stats.avg_power, opt_stats.avg_power),
        opt_safe,
        lazy.trajectory.safe,
        lazy.flagged,
        res,
    )


def write_csv(path, instance: MmsInstance | None, traj: Trajectory, use_samples: bool = False) -> None:
    """Columns: time, x_1..x_N, mode, power."""
    rows = traj.samples if use_samples else [(t, x) for t, x, _ in traj.switch_points]
    modes = [m for _, _, m in traj.switch_points]
    n = len(rows[0][1]) if rows else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", *[f"x_{i + 1}" for i in range(n)], "mode", "power"])
        for k, (t, x) in enumerate(rows):
            mode = modes[k] if not use_samples and k < len(modes) else _mode_at(traj, t)
            power = ""
            if instance is not None and mode is not None and mode in instance:
                p = instance.mode(mode).price
                power = "" if p is None else float(p)
            w.writerow([float(t), *[mp.nstr(v, 17) for v in x], mode or "", power])


def _mode_at(traj: Trajectory, t):
    current = None
    for ts, _, m in traj.switch_points:
        if ts > t:
            break
        current = m
    return current


def write_stats_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
