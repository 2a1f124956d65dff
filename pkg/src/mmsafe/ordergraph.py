"""Safe controllability when a directed graph restricts which mode may follow which.

An infinite run eventually stays inside one strongly connected component
``C`` reachable from the initial mode, so each such component is tried in
turn.  Inside ``C`` the controller cycles a closed walk ``rho_C`` that visits
every mode of ``C``; before it, a short prefix walks from the initial mode
to the head of ``rho_C``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .core import InvalidInstance, MmsInstance, PeriodicController, SafeBox, TimedAction, flow_segment, mp, to_mpf
from .synthesis import SynthesisResult, _interior_start, dwell_scale, first_steps_scale, safe_core

BRACKET_DENOMINATOR = 2**48


@dataclass(frozen=True)
class OrderSpec:
    edges: frozenset
    initial_mode: str

    def __post_init__(self):
        object.__setattr__(self, "edges", frozenset((str(a), str(b)) for a, b in self.edges))

    def validate(self, instance: MmsInstance) -> None:
        if self.initial_mode not in instance:
            raise InvalidInstance(f"initial mode {self.initial_mode!r} is not a mode of the instance")
        for a, b in self.edges:
            for end in (a, b):
                if end not in instance:
                    raise InvalidInstance(f"edge ({a!r}, {b!r}) names unknown mode {end!r}")

    def successors(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for a, b in sorted(self.edges):
            out.setdefault(a, []).append(b)
        return out

    @classmethod
    def complete(cls, instance: MmsInstance, initial_mode: str) -> "OrderSpec":
        ids = instance.mode_ids
        return cls(frozenset((a, b) for a in ids for b in ids), initial_mode)


def _reachable(succ: dict, start: str) -> list[str]:
    seen = {start}
    order = [start]
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in succ.get(v, ()):
            if w not in seen:
                seen.add(w)
                order.append(w)
                queue.append(w)
    return order


def _tarjan(nodes: list[str], succ: dict) -> list[list[str]]:
    """Iterative Tarjan restricted to ``nodes``."""
    allowed = set(nodes)
    index, low, on_stack = {}, {}, set()
    stack, comps = [], []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(succ.get(root, ())))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in allowed:
                    continue
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ.get(w, ()))))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                comps.append(comp)
    return comps


def scc_candidates(spec: OrderSpec, instance: MmsInstance | None = None) -> list[tuple[str, ...]]:
    """Maximal SCCs reachable from the initial mode.

    Members are listed in canonical order (instance order, else sorted ids);
    components are ordered by their first member.
    """
    succ = spec.successors()
    nodes = {a for e in spec.edges for a in e}
    if spec.initial_mode not in nodes:
        raise InvalidInstance(f"initial mode {spec.initial_mode!r} is absent from the graph")
    key = (lambda m: instance.position(m)) if instance is not None else (lambda m: m)
    reach = sorted(_reachable(succ, spec.initial_mode), key=key)
    comps = [tuple(sorted(c, key=key)) for c in _tarjan(reach, succ)]
    return sorted(comps, key=lambda c: key(c[0]))


def is_trivial(spec: OrderSpec, component: Iterable[str]) -> bool:
    comp = tuple(component)
    return len(comp) == 1 and (comp[0], comp[0]) not in spec.edges


def _shortest_path(succ: dict, src: str, dst: str, inside: set) -> list[str] | None:
    """BFS path ``[src, ..., dst]`` using only nodes in ``inside``; needs at least one edge."""
    parent = {}
    queue = deque()
    for w in succ.get(src, ()):
        if w in inside and w not in parent:
            parent[w] = src
            queue.append(w)
    while queue:
        v = queue.popleft()
        if v == dst:
            path = [dst]
            cur = parent[dst]
            while cur != src:
                path.append(cur)
                cur = parent[cur]
            path.append(src)
            return path[::-1]
        for w in succ.get(v, ()):
            if w in inside and w not in parent:
                parent[w] = v
                queue.append(w)
    return None


def rho_sequence(spec: OrderSpec, component: Iterable[str]) -> list[str]:
    """Closed walk through every mode of ``component`` (listed in canonical order).

    The returned list omits the closing step back to its first element.
    """
    comp = list(component)
    if not comp:
        raise ValueError("empty component")
    if is_trivial(spec, comp):
        raise ValueError(f"component {comp} has no cycle")
    succ = spec.successors()
    inside = set(comp)
    if len(comp) == 1:
        return comp
    walk = []
    stops = comp + [comp[0]]
    for a, b in zip(stops, stops[1:]):
        path = _shortest_path(succ, a, b, inside)
        if path is None:
            raise ValueError(f"no path from {a!r} to {b!r} inside the component")
        walk.extend(path[:-1])
    return walk


def _path_to(spec: OrderSpec, src: str, dst: str) -> list[str]:
    if src == dst:
        return [src]
    succ = spec.successors()
    nodes = {a for e in spec.edges for a in e} | {src}
    path = _shortest_path(succ, src, dst, nodes)
    if path is None:
        raise ValueError(f"{dst!r} is unreachable from {src!r}")
    return path


def _bracket(x) -> tuple[tuple[Fraction, ...], tuple[Fraction, ...]]:
    lo, hi = [], []
    for v in x:
        scaled = to_mpf(v) * BRACKET_DENOMINATOR
        lo.append(Fraction(int(mp.floor(scaled)), BRACKET_DENOMINATOR))
        hi.append(Fraction(int(mp.ceil(scaled)), BRACKET_DENOMINATOR))
    return tuple(lo), tuple(hi)


@dataclass(frozen=True)
class OrderedResult(SynthesisResult):
    component: tuple[str, ...] = ()
    bracket: tuple = ()
    prefix_end: tuple = ()


def synthesize_ordered(instance: MmsInstance, box: SafeBox, x0, spec: OrderSpec) -> OrderedResult:
    """Periodic safe controller whose mode sequence follows the edges of ``spec``."""
    x0 = _interior_start(box, x0)
    spec.validate(instance)
    for comp in scc_candidates(spec, instance):
        if is_trivial(spec, comp):
            continue
        core = safe_core(instance.restrict(comp), box)
        if core is None:
            continue
        rho = rho_sequence(spec, comp)
        walk = _path_to(spec, spec.initial_mode, rho[0])
        prefix_modes = walk[:-1]
        prefix = ()
        x1 = x0
        if prefix_modes:
            budget = first_steps_scale(instance, box, x0, range(instance.num_vars))
            total = Fraction(1) if budget is None else budget / 2
            dwell = total / len(prefix_modes)
            prefix = tuple(TimedAction(m, dwell) for m in prefix_modes)
            for m in prefix_modes:
                x1 = flow_segment(x1, instance.mode(m), dwell)
        if prefix:
            x_l, x_u = _bracket(x1)
            if not (box.strictly_contains(x_l) and box.strictly_contains(x_u)):
                raise ArithmeticError("rational bracket of the prefix end point touches the box")
        else:
            x_l = x_u = x0
        s = min(
            dwell_scale(core.instance, box, x_l, core.interior, core.variables, period_len=len(rho)),
            dwell_scale(core.instance, box, x_u, core.interior, core.variables, period_len=len(rho)),
        )
        visits = {m: rho.count(m) for m in set(rho)}
        period = tuple(TimedAction(m, core.interior[m] * s / visits[m]) for m in rho)
        return OrderedResult(
            PeriodicController(period, prefix),
            core.interior,
            s,
            core.instance.mode_ids,
            core.variables,
            tuple(comp),
            (x_l, x_u),
            tuple(x1),
        )
    return OrderedResult()


@dataclass(frozen=True)
class Compliance:
    ok: bool
    bad_step: tuple | None = None
    reason: str = ""


def check_order(controller: PeriodicController, spec: OrderSpec) -> Compliance:
    """Scan prefix, period and the wrap-around step for edges outside ``spec``."""
    seq = [a.mode for a in controller.prefix] + [a.mode for a in controller.period]
    if not seq or seq[0] != spec.initial_mode:
        return Compliance(False, None, f"run does not start in {spec.initial_mode!r}")
    steps = list(zip(seq, seq[1:]))
    head = controller.period[0].mode
    steps.append((controller.period[-1].mode, head))
    for k, step in enumerate(steps):
        if step not in spec.edges:
            return Compliance(False, step, f"step {k}: {step[0]!r} -> {step[1]!r} is not an edge")
    return Compliance(True)
