"""Independent reference computations used by the tests.

Nothing here calls into the solver pipeline: the oracles re-derive answers
from the definitions with brute force or plain numerics.
"""

from __future__ import annotations

from fractions import Fraction as Fr
from itertools import combinations
from math import ceil, gcd

import numpy as np


def rk4_linear(x0, a, b, t, steps):
    """Fixed-step RK4 for ``dx/dt = b - a x``, vectorised over segments."""
    x = np.array(x0, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    h = np.asarray(t, dtype=float) / steps
    for _ in range(steps):
        k1 = b - a * x
        k2 = b - a * (x + 0.5 * h * k1)
        k3 = b - a * (x + 0.5 * h * k2)
        k4 = b - a * (x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def simplex_grid(k, res):
    """All points of the ``k``-simplex with coordinates in ``(1/res) Z``."""
    def rec(prefix, left, slots):
        if slots == 1:
            yield prefix + (Fr(left, res),)
            return
        for v in range(left + 1):
            yield from rec(prefix + (Fr(v, res),), left - v, slots - 1)
    yield from rec((), res, k)


def _solve_square(rows, rhs):
    n = len(rows)
    a = [list(r) + [v] for r, v in zip(rows, rhs)]
    for c in range(n):
        p = next((r for r in range(c, n) if a[r][c] != 0), None)
        if p is None:
            return None
        a[c], a[p] = a[p], a[c]
        for r in range(n):
            if r != c and a[r][c] != 0:
                g = a[r][c] / a[c][c]
                a[r] = [x - g * y for x, y in zip(a[r], a[c])]
    return [a[i][n] / a[i][i] for i in range(n)]


def _pinned(sub, l, u, i):
    eqs = {m.b[i] / m.a[i] for m in sub}
    return eqs == {l[i]} or eqs == {u[i]}


def _face_forms(sub, l, u):
    """Linear forms that must be strictly positive on a face.

    A vector with support ``sub`` is implementable iff, per variable, either
    every used mode rests exactly on the same bound (the variable is pinned,
    its F value there is zero and the match condition holds) or both F
    conditions hold strictly.
    """
    forms = []
    for i in range(len(l)):
        if _pinned(sub, l, u, i):
            continue
        forms.append([m.b[i] - m.a[i] * l[i] for m in sub])
        forms.append([-(m.b[i] - m.a[i] * u[i]) for m in sub])
    return forms


def controllable_by_faces(modes, l, u):
    """Exact reference verdict: does some implementable vector exist?

    Per support the question is whether the strict inequalities plus
    ``f_k > 0`` have a common solution on the simplex, decided by enumerating
    the vertices of the max-min-slack LP.
    """
    for size in range(1, len(modes) + 1):
        for S in combinations(range(len(modes)), size):
            sub = [modes[k] for k in S]
            rows = _face_forms(sub, l, u)
            rows += [[Fr(int(j == k)) for j in range(size)] for k in range(size)]
            if _max_min_slack_positive(rows, size):
                return True
    return False


def _max_min_slack_positive(rows, size):
    """Is there f on the simplex with ``row . f > 0`` for every row?"""
    nvar = size + 1  # weights and the slack d
    eq = [Fr(1)] * size + [Fr(0)]
    ineq = [list(r) + [Fr(-1)] for r in rows]
    best = None
    for combo in combinations(range(len(ineq)), nvar - 1):
        sol = _solve_square([eq] + [ineq[c] for c in combo], [Fr(1)] + [Fr(0)] * (nvar - 1))
        if sol is None:
            continue
        if all(sum(c * x for c, x in zip(r, sol)) >= 0 for r in ineq):
            if best is None or sol[-1] > best:
                best = sol[-1]
    return best is not None and best > 0


def _int_points(k, res):
    if k == 1:
        yield (res,)
        return
    for v in range(res + 1):
        for rest in _int_points(k - 1, res - v):
            yield (v,) + rest


def _scaled(row):
    """Positive multiple of ``row`` with integer entries, and the multiplier."""
    scale = 1
    for c in row:
        scale = scale * c.denominator // gcd(scale, c.denominator)
    return [int(c * scale) for c in row], scale


def grid_controllable(modes, l, u, res=48):
    """Grid search over each closed face of the frequency simplex.

    Returns ``True`` when a grid point makes every face form positive (the
    condition is open, so a nearby interior point works too), ``False`` when
    every face's best grid slack is below minus the Lipschitz margin, and
    ``None`` otherwise (a boundary case the grid cannot settle).  Points are
    ``v / res`` with integer ``v`` so the scan runs in integer arithmetic.
    """
    undecided = False
    for size in range(1, len(modes) + 1):
        for S in combinations(range(len(modes)), size):
            sub = [modes[k] for k in S]
            forms = _face_forms(sub, l, u)
            if not forms:
                return True
            lip = max(abs(c) for row in forms for c in row)
            margin = lip * Fr(2 * size, res)
            rows = []
            for row in forms:
                ints, scale = _scaled(row)
                # slack(v/res) >= -margin  <=>  ints . v >= -margin * scale * res
                rows.append((ints, ceil(-margin * scale * res)))
            for v in _int_points(size, res):
                dots = [sum(c * x for c, x in zip(ints, v)) for ints, _ in rows]
                if all(d > 0 for d in dots):
                    return True
                if not undecided and all(d >= t for d, (_, t) in zip(dots, rows)):
                    undecided = True
    return None if undecided else False


def grid_min_avg(modes, l, u, res):
    """Smallest average price over good grid vectors, with the grid's margin.

    Returns ``(best_price_or_None, lipschitz)`` where ``lipschitz`` bounds how
    much the F forms can change between neighbouring grid points.
    """
    forms = []
    for i in range(len(l)):
        forms.append([m.b[i] - m.a[i] * l[i] for m in modes])
        forms.append([-(m.b[i] - m.a[i] * u[i]) for m in modes])
    lip = max(abs(c) for row in forms for c in row)
    best = None
    for point in simplex_grid(len(modes), res):
        if all(sum(c * p for c, p in zip(row, point)) >= 0 for row in forms):
            price = sum(m.price * p for m, p in zip(modes, point))
            best = price if best is None else min(best, price)
    return best, lip


def relaxed_grid_min_avg(modes, l, u, res):
    """Cheapest grid vector whose F forms are at least ``-lip * K / res``.

    Rounding any vector to the grid (largest remainder) moves each weight by
    less than ``1/res``, so every good vector has a grid neighbour within L1
    distance ``K / res`` that passes this relaxed test.
    """
    k = len(modes)
    forms = []
    for i in range(len(l)):
        forms.append([m.b[i] - m.a[i] * l[i] for m in modes])
        forms.append([-(m.b[i] - m.a[i] * u[i]) for m in modes])
    lip = max(abs(c) for row in forms for c in row)
    tol = lip * Fr(k, res)
    best = None
    for point in simplex_grid(k, res):
        if all(sum(c * p for c, p in zip(row, point)) >= -tol for row in forms):
            price = sum(m.price * p for m, p in zip(modes, point))
            best = price if best is None else min(best, price)
    return best, lip
