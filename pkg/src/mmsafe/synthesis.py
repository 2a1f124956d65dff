"""Safe controllability and periodic controller synthesis.

The pipeline:

1. check that some *good* frequency vector exists (an LP over the simplex);
2. repeatedly find variables that are critical for every good vector and
   prune the modes whose equilibrium does not sit on the critical bound;
3. solve the strict system on the surviving variables for an interior
   vector ``f``;
4. cycle the surviving modes with dwell ``f(m) * s`` for a certified scale
   ``s`` (see :func:`dwell_scale`).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .core import (
    FrequencyVector,
    InvalidInstance,
    MmsInstance,
    PeriodicController,
    SafeBox,
    TimedAction,
    as_fraction,
    eval_F,
)
from .lp import Constraint, LinearProgram, Objective, solve, solve_strict


class RejectedInput(ValueError):
    """The starting point is not strictly inside the safe box."""


@dataclass(frozen=True)
class SynthesisResult:
    controller: PeriodicController | None = None
    frequency: FrequencyVector | None = None
    scale_s: Fraction | None = None
    surviving_modes: tuple[str, ...] = ()
    surviving_vars: tuple[int, ...] = ()

    @property
    def feasible(self) -> bool:
        return self.controller is not None

    @property
    def verdict(self) -> str:
        return "controller" if self.feasible else "no_controller"


@dataclass(frozen=True)
class SafeCore:
    """Surviving modes/variables after critical elimination plus an interior vector."""

    instance: MmsInstance
    variables: tuple[int, ...]
    interior: FrequencyVector
    slack: Fraction


def _check_dims(instance: MmsInstance, box: SafeBox) -> None:
    if box.dim != instance.num_vars:
        raise InvalidInstance(
            f"box has dimension {box.dim}, instance has {instance.num_vars} variables"
        )


def _var(k: int) -> str:
    return f"f{k}"


def frequency_program(
    instance: MmsInstance,
    box: SafeBox,
    variables: Sequence[int] | None = None,
    objective: Objective | None = None,
) -> tuple[LinearProgram, dict[int, tuple[int, int]]]:
    """The good-vector system over ``variables``.

    Row 0 is the simplex equation; ``rows[i] = (lower_row, upper_row)``.
    """
    if variables is None:
        variables = range(instance.num_vars)
    names = tuple(_var(k) for k in range(len(instance.modes)))
    constraints = [Constraint({n: Fraction(1) for n in names}, "=", 1)]
    rows = {}
    for i in variables:
        lo, hi = box.l[i], box.u[i]
        lower = {}
        upper = {}
        for n, m in zip(names, instance.modes):
            ai, bi = m.a[i], m.b[i]
            lower[n] = bi - ai * lo
            upper[n] = bi - ai * hi
        rows[i] = (len(constraints), len(constraints) + 1)
        constraints.append(Constraint(lower, ">=", 0))
        constraints.append(Constraint(upper, "<=", 0))
    return LinearProgram(names, tuple(constraints), objective), rows


def _vector(instance: MmsInstance, assignment) -> FrequencyVector:
    return FrequencyVector(
        {m.id: assignment.get(_var(k), Fraction(0)) for k, m in enumerate(instance.modes)}
    )


def good_vector_exists(instance: MmsInstance, box: SafeBox) -> FrequencyVector | None:
    _check_dims(instance, box)
    lp, _ = frequency_program(instance, box)
    out = solve(lp)
    return _vector(instance, out.assignment) if out.feasible else None


def _strict_test(instance, box, variables, strict_vars):
    lp, rows = frequency_program(instance, box, variables)
    strict = [r for i in strict_vars for r in rows[i]]
    return solve_strict(lp, strict)


def eliminate_criticals(
    instance: MmsInstance, box: SafeBox, f_star: FrequencyVector
) -> tuple[MmsInstance | None, tuple[int, ...]]:
    """Prune modes and variables that are critical for every good vector.

    Returns ``(None, vars)`` when every mode gets pruned.
    """
    _check_dims(instance, box)
    modes = list(instance.modes)
    live = list(range(instance.num_vars))
    changed = True
    while changed:
        changed = False
        for j in list(live):
            current = MmsInstance(instance.num_vars, tuple(modes))
            out = _strict_test(current, box, live, [j])
            if out.feasible:
                continue
            if out.assignment is None:
                # no good vector is left at all; the final strict check fails too
                return current, tuple(live)
            witness = f_star
            if not set(f_star.support()) <= set(current.mode_ids):
                witness = _vector(current, out.assignment)
            if eval_F(current, _restrict(witness, current), j, box.l[j]) == 0:
                bound = box.l[j]
            else:
                bound = box.u[j]
            kept = [m for m in modes if m.equilibrium(j) == bound]
            if len(kept) != len(modes):
                modes = kept
            live.remove(j)
            changed = True
            if not modes:
                return None, tuple(live)
    return MmsInstance(instance.num_vars, tuple(modes)), tuple(live)


def _restrict(f: FrequencyVector, instance: MmsInstance) -> FrequencyVector:
    return FrequencyVector({k: v for k, v in f.weights.items() if k in instance})


def _max_drift(instance: MmsInstance, i: int, x) -> Fraction:
    return max(abs(m.b[i] - m.a[i] * x) for m in instance.modes)


def first_steps_scale(instance: MmsInstance, box: SafeBox, x0, variables) -> Fraction | None:
    """Largest total time that keeps every listed variable inside the box from ``x0``.

    Uses the drift bound ``|x(t) - x0| <= t * max_m |b - a*x0|``; ``None``
    means unbounded (no drift anywhere).
    """
    best = None
    for i in variables:
        drift = _max_drift(instance, i, x0[i])
        if drift == 0:
            continue
        term = min(x0[i] - box.l[i], box.u[i] - x0[i]) / drift
        best = term if best is None else min(best, term)
    return best


def dwell_scale(
    instance: MmsInstance,
    box: SafeBox,
    x0,
    f: FrequencyVector,
    surviving_vars: Sequence[int],
    period_len: int | None = None,
) -> Fraction:
    """Certified period length ``s`` for the cycling controller built from ``f``.

    ``period_len`` is the number of timed actions in one period; it defaults to
    the number of modes of ``instance``.
    """
    x0 = tuple(as_fraction(v) for v in x0)
    if not box.strictly_contains(x0):
        raise RejectedInput("x0 must lie strictly inside the safe box")
    k = len(instance.modes) if period_len is None else period_len
    candidates = []
    first = first_steps_scale(instance, box, x0, surviving_vars)
    if first is not None:
        candidates.append(first)
    for i in surviving_vars:
        lo = eval_F(instance, f, i, box.l[i])
        hi = eval_F(instance, f, i, box.u[i])
        margin = min(lo, -hi)
        if margin <= 0:
            raise ValueError(f"frequency vector is not strictly feasible on variable {i}")
        d = abs(box.l[i]) + abs(box.u[i]) + 2 * max(abs(m.equilibrium(i)) for m in instance.modes)
        rate = sum((f[m.id] * m.a[i] for m in instance.modes), Fraction(0))
        candidates.append(margin / (d * k * rate * rate))
    if not candidates:
        # every mode sits on the critical bounds of every variable: any scale is safe
        return Fraction(1)
    return min(candidates)


def safe_core(instance: MmsInstance, box: SafeBox) -> SafeCore | None:
    """Run the decision part of the pipeline; ``None`` means no safe controller."""
    _check_dims(instance, box)
    every = tuple(range(instance.num_vars))
    # the strict test doubles as the weak one: its relaxation is the weak system
    direct = _strict_test(instance, box, every, every)
    if direct.feasible:
        return SafeCore(instance, every, _vector(instance, direct.assignment), direct.slack)
    if direct.assignment is None:
        return None
    f_star = _vector(instance, direct.assignment)
    survivors, live = eliminate_criticals(instance, box, f_star)
    if survivors is None:
        return None
    out = _strict_test(survivors, box, live, live)
    if not out.feasible:
        return None
    return SafeCore(survivors, tuple(live), _vector(survivors, out.assignment), out.slack)


def build_controller(
    core_instance: MmsInstance,
    box: SafeBox,
    x0,
    f: FrequencyVector,
    variables: Sequence[int],
    sequence: Sequence[str] | None = None,
) -> SynthesisResult:
    """Cycle ``sequence`` (default: the instance modes) with dwell ``f(m) * s``.

    A mode listed ``c`` times in ``sequence`` receives ``f(m) * s / c`` per visit.
    """
    if sequence is None:
        sequence = core_instance.mode_ids
    s = dwell_scale(core_instance, box, x0, f, variables, period_len=len(sequence))
    visits = {m: sequence.count(m) for m in set(sequence)}
    period = tuple(TimedAction(m, f[m] * s / visits[m]) for m in sequence)
    return SynthesisResult(
        PeriodicController(period),
        f,
        s,
        core_instance.mode_ids,
        tuple(variables),
    )


def _interior_start(box: SafeBox, x0):
    x0 = tuple(as_fraction(v) for v in x0)
    if len(x0) != box.dim:
        raise InvalidInstance(f"x0 has {len(x0)} entries, expected {box.dim}")
    if not box.strictly_contains(x0):
        raise RejectedInput("x0 must lie strictly inside the safe box")
    return x0


def synthesize(instance: MmsInstance, box: SafeBox, x0) -> SynthesisResult:
    x0 = _interior_start(box, x0)
    core = safe_core(instance, box)
    if core is None:
        return SynthesisResult()
    return build_controller(core.instance, box, x0, core.interior, core.variables)
