"""Exact rational linear programming.

A two-phase revised simplex in exact rational arithmetic (``gmpy2.mpq``
internally, :class:`fractions.Fraction` at the interface).  The basis
inverse, the basic solution and every pivot decision are exact.  Entering
columns follow the most negative reduced cost; after a run of degenerate
pivots the rule switches to Bland's lowest-index choice, which cannot cycle.  To keep pricing cheap on programs with thousands of
columns, reduced costs are first evaluated in floating point; a column is
accepted or rejected from the float value only when it lies outside a
rigorous rounding-error band, otherwise it is priced exactly.

Strict inequalities are handled by slack maximisation: each strict row
``F >= 0`` becomes ``F - delta >= 0`` with ``0 <= delta <= 1`` and ``delta``
maximised.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import gmpy2
import numpy as np

RELATIONS = (">=", "<=", "=")
_ZERO = Fraction(0)
_ONE = Fraction(1)
_Q = gmpy2.mpq
_QZERO = _Q(0)
_QONE = _Q(1)
DEGENERATE_LIMIT = 50


def _q(v) -> "gmpy2.mpq":
    return _Q(v.numerator, v.denominator)


def _fr(v) -> Fraction:
    return Fraction(int(v.numerator), int(v.denominator))


class MalformedProgram(ValueError):
    pass


def _frac(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, str)) and not isinstance(v, bool):
        return Fraction(v)
    raise MalformedProgram(f"coefficient {v!r} is not an exact rational")


@dataclass(frozen=True)
class Constraint:
    coeffs: Mapping[str, Fraction]
    relation: str
    rhs: Fraction = _ZERO

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise MalformedProgram(f"unknown relation {self.relation!r}")
        coeffs = self.coeffs
        if not all(type(v) is Fraction for v in coeffs.values()):
            coeffs = {k: _frac(v) for k, v in coeffs.items()}
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "rhs", _frac(self.rhs))

    def lhs(self, assignment: Mapping[str, Fraction]) -> Fraction:
        return sum((c * assignment.get(k, _ZERO) for k, c in self.coeffs.items()), _ZERO)

    def satisfied_by(self, assignment: Mapping[str, Fraction]) -> bool:
        v = self.lhs(assignment)
        if self.relation == ">=":
            return v >= self.rhs
        if self.relation == "<=":
            return v <= self.rhs
        return v == self.rhs


@dataclass(frozen=True)
class Objective:
    sense: str
    coeffs: Mapping[str, Fraction]

    def __post_init__(self):
        if self.sense not in ("minimize", "maximize"):
            raise MalformedProgram(f"objective sense must be minimize/maximize, not {self.sense!r}")
        object.__setattr__(self, "coeffs", {k: _frac(v) for k, v in self.coeffs.items()})

    def value(self, assignment: Mapping[str, Fraction]) -> Fraction:
        return sum((c * assignment.get(k, _ZERO) for k, c in self.coeffs.items()), _ZERO)


@dataclass(frozen=True)
class LinearProgram:
    """Variables are nonnegative unless listed in ``free``."""

    variables: tuple[str, ...]
    constraints: tuple[Constraint, ...]
    objective: Objective | None = None
    free: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "free", frozenset(self.free))
        declared = set(self.variables)
        if len(declared) != len(self.variables):
            raise MalformedProgram("duplicate variable names")
        for k, con in enumerate(self.constraints):
            if not isinstance(con, Constraint):
                raise MalformedProgram(f"constraint {k} is not a Constraint")
            stray = set(con.coeffs) - declared
            if stray:
                raise MalformedProgram(f"constraint {k} uses undeclared variables {sorted(stray)}")
        if self.objective is not None:
            stray = set(self.objective.coeffs) - declared
            if stray:
                raise MalformedProgram(f"objective uses undeclared variables {sorted(stray)}")
        if self.free - declared:
            raise MalformedProgram("free set names undeclared variables")

    def satisfied_by(self, assignment: Mapping[str, Fraction]) -> bool:
        if any(assignment.get(v, _ZERO) < 0 for v in self.variables if v not in self.free):
            return False
        return all(c.satisfied_by(assignment) for c in self.constraints)


@dataclass(frozen=True)
class LpOutcome:
    status: str  # infeasible | feasible | optimal | unbounded
    assignment: dict[str, Fraction] | None = None
    value: Fraction | None = None

    @property
    def feasible(self) -> bool:
        return self.status in ("feasible", "optimal", "unbounded")


@dataclass(frozen=True)
class StrictOutcome:
    """Result of :func:`solve_strict`.

    When ``status == "infeasible"`` but the weak relaxation is feasible,
    ``assignment`` holds the point reached with ``slack == 0``.
    """

    status: str  # infeasible | feasible
    assignment: dict[str, Fraction] | None = None
    slack: Fraction = _ZERO

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


class _RevisedSimplex:
    """Revised simplex on ``A x = b, x >= 0`` with an identity starting basis."""

    def __init__(self, columns: list[dict[int, Fraction]], b: list[Fraction], basis: list[int]):
        self.m = len(b)
        self.n = len(columns)
        self.columns = [{i: _q(v) for i, v in col.items()} for col in columns]
        dense = np.zeros((self.m, self.n))
        for j, col in enumerate(columns):
            for i, v in col.items():
                dense[i, j] = float(v)
        self.F = dense
        self.absF = np.abs(dense)
        self.basis = list(basis)
        self.in_basis = np.zeros(self.n, dtype=bool)
        self.in_basis[self.basis] = True
        self.Binv = [[_QONE if i == k else _QZERO for k in range(self.m)] for i in range(self.m)]
        self.xB = [_q(v) for v in b]
        self.pivots = 0
        self.degenerate = 0

    def _duals(self, cost: Sequence[Fraction]) -> list[Fraction]:
        cB = [cost[j] for j in self.basis]
        y = []
        for k in range(self.m):
            acc = _QZERO
            for i in range(self.m):
                if cB[i]:
                    acc += cB[i] * self.Binv[i][k]
            y.append(acc)
        return y

    def _exact_reduced(self, j: int, cost, y) -> Fraction:
        d = cost[j]
        for i, v in self.columns[j].items():
            if y[i]:
                d -= y[i] * v
        return d

    def _ftran(self, j: int) -> list[Fraction]:
        col = self.columns[j]
        out = []
        for i in range(self.m):
            row = self.Binv[i]
            acc = _QZERO
            for k, v in col.items():
                if row[k]:
                    acc += row[k] * v
            out.append(acc)
        return out

    def _pivot(self, r: int, j: int, u: list[Fraction]) -> None:
        piv = u[r]
        row_r = [v / piv for v in self.Binv[r]]
        x_r = self.xB[r] / piv
        for i in range(self.m):
            if i == r:
                continue
            f = u[i]
            if f:
                self.Binv[i] = [a - f * c for a, c in zip(self.Binv[i], row_r)]
                self.xB[i] -= f * x_r
        self.Binv[r] = row_r
        self.xB[r] = x_r
        self.in_basis[self.basis[r]] = False
        self.basis[r] = j
        self.in_basis[j] = True
        self.pivots += 1

    def _entering(self, cost, cost_f, allowed, y):
        yf = np.array([float(v) for v in y])
        with np.errstate(all="ignore"):
            d = cost_f - yf @ self.F
            scale = np.abs(cost_f) + np.abs(yf) @ self.absF
        tol = 1e-9 * scale + 1e-300
        ambiguous = ~np.isfinite(d) | ~np.isfinite(tol)
        mask = allowed & ~self.in_basis
        certain = mask & ~ambiguous & (d < -tol)
        if self.degenerate < DEGENERATE_LIMIT:
            if certain.any():
                score = np.where(certain, d / np.maximum(scale, 1e-300), np.inf)
                return int(np.argmin(score))
            for j in np.nonzero(mask & ((d < tol) | ambiguous))[0]:
                if self._exact_reduced(int(j), cost, y) < 0:
                    return int(j)
            return None
        for j in np.nonzero(mask & ((d < tol) | ambiguous))[0]:
            if certain[j] or self._exact_reduced(int(j), cost, y) < 0:
                return int(j)
        return None

    def run(self, cost: Sequence[Fraction], allowed: np.ndarray) -> str:
        cost_f = np.array([float(c) for c in cost])
        cost = [_q(c) for c in cost]
        self.degenerate = 0
        while True:
            y = self._duals(cost)
            j = self._entering(cost, cost_f, allowed, y)
            if j is None:
                return "optimal"
            u = self._ftran(j)
            r = None
            best = None
            for i in range(self.m):
                if u[i] > 0:
                    ratio = self.xB[i] / u[i]
                    if best is None or ratio < best or (ratio == best and self.basis[i] < self.basis[r]):
                        best, r = ratio, i
            if r is None:
                return "unbounded"
            self.degenerate = self.degenerate + 1 if best == 0 else 0
            self._pivot(r, j, u)

    def value(self, cost) -> Fraction:
        return sum((cost[j] * _fr(x) for j, x in zip(self.basis, self.xB)), _ZERO)

    def drive_out(self, artificial: np.ndarray) -> None:
        """Pivot zero-level artificial basics out of the basis where possible."""
        for r in range(self.m):
            if not artificial[self.basis[r]]:
                continue
            row = self.Binv[r]
            for j in range(self.n):
                if artificial[j] or self.in_basis[j]:
                    continue
                entry = _QZERO
                for k, v in self.columns[j].items():
                    if row[k]:
                        entry += row[k] * v
                if entry != 0:
                    self._pivot(r, j, self._ftran(j))
                    break


def _standard_form(lp: LinearProgram):
    """Translate ``lp`` into equality form with nonnegative rhs.

    Returns the column list, rhs, initial basis, cost of phase one, a mask of
    artificial columns and the mapping from variables to (plus, minus) columns.
    """
    var_cols: dict[str, tuple[int, int | None]] = {}
    columns: list[dict[int, Fraction]] = []
    for v in lp.variables:
        plus = len(columns)
        columns.append({})
        minus = None
        if v in lp.free:
            minus = len(columns)
            columns.append({})
        var_cols[v] = (plus, minus)

    b: list[Fraction] = []
    basis: list[int] = []
    artificial_cols: list[int] = []
    for r, con in enumerate(lp.constraints):
        sign = 1
        rel = con.relation
        rhs = con.rhs
        if rhs < 0 or (rhs == 0 and rel == ">="):
            sign = -1
            rhs = -rhs
            rel = {">=": "<=", "<=": ">=", "=": "="}[rel]
        for v, c in con.coeffs.items():
            if c == 0:
                continue
            plus, minus = var_cols[v]
            val = c if sign == 1 else -c
            columns[plus][r] = columns[plus].get(r, _ZERO) + val
            if minus is not None:
                columns[minus][r] = columns[minus].get(r, _ZERO) - val
        b.append(rhs)
        if rel == "<=":
            basis.append(len(columns))
            columns.append({r: _ONE})
        else:
            if rel == ">=":
                columns.append({r: -_ONE})
            basis.append(len(columns))
            artificial_cols.append(len(columns))
            columns.append({r: _ONE})
    for col in columns:
        for r in [r for r, v in col.items() if v == 0]:
            del col[r]
    artificial = np.zeros(len(columns), dtype=bool)
    artificial[artificial_cols] = True
    return columns, b, basis, artificial, var_cols


def _assignment(lp, sx: _RevisedSimplex, var_cols) -> dict[str, Fraction]:
    values = [_ZERO] * sx.n
    for j, x in zip(sx.basis, sx.xB):
        values[j] = _fr(x)
    out = {}
    for v, (plus, minus) in var_cols.items():
        out[v] = values[plus] - (values[minus] if minus is not None else _ZERO)
    return out


def _solve_unconstrained(lp: LinearProgram) -> LpOutcome:
    zero = {v: _ZERO for v in lp.variables}
    if lp.objective is None:
        return LpOutcome("feasible", zero)
    sign = 1 if lp.objective.sense == "minimize" else -1
    for v, c in lp.objective.coeffs.items():
        if (v in lp.free and c != 0) or sign * c < 0:
            return LpOutcome("unbounded", zero)
    return LpOutcome("optimal", zero, _ZERO)


def solve(lp: LinearProgram) -> LpOutcome:
    """Decide feasibility of ``lp`` and optimise its objective, if any, exactly."""
    if not lp.constraints:
        return _solve_unconstrained(lp)
    columns, b, basis, artificial, var_cols = _standard_form(lp)
    sx = _RevisedSimplex(columns, b, basis)
    n = sx.n
    if artificial.any():
        phase1 = [_ONE if artificial[j] else _ZERO for j in range(n)]
        sx.run(phase1, np.ones(n, dtype=bool))
        if sx.value(phase1) > 0:
            return LpOutcome("infeasible")
        sx.drive_out(artificial)
    if lp.objective is None:
        return LpOutcome("feasible", _assignment(lp, sx, var_cols))

    sign = 1 if lp.objective.sense == "minimize" else -1
    cost = [_ZERO] * n
    for v, c in lp.objective.coeffs.items():
        plus, minus = var_cols[v]
        cost[plus] += sign * c
        if minus is not None:
            cost[minus] -= sign * c
    status = sx.run(cost, ~artificial)
    if status == "unbounded":
        return LpOutcome("unbounded", _assignment(lp, sx, var_cols))
    assignment = _assignment(lp, sx, var_cols)
    return LpOutcome("optimal", assignment, lp.objective.value(assignment))


SLACK_NAME = "__delta__"


def solve_strict(lp: LinearProgram, strict_rows: Iterable[int]) -> StrictOutcome:
    """Feasibility of ``lp`` with the rows in ``strict_rows`` made strict.

    Any objective of ``lp`` is ignored; the slack ``delta`` is maximised.
    """
    strict = sorted(set(strict_rows))
    for k in strict:
        if not 0 <= k < len(lp.constraints):
            raise MalformedProgram(f"strict row {k} out of range")
        if lp.constraints[k].relation == "=":
            raise MalformedProgram("equality rows cannot be made strict")
    if SLACK_NAME in lp.variables:
        raise MalformedProgram(f"variable name {SLACK_NAME!r} is reserved")
    strict_set = set(strict)
    rows = []
    for k, con in enumerate(lp.constraints):
        if k in strict_set:
            coeffs = dict(con.coeffs)
            coeffs[SLACK_NAME] = -_ONE if con.relation == ">=" else _ONE
            rows.append(Constraint(coeffs, con.relation, con.rhs))
        else:
            rows.append(con)
    rows.append(Constraint({SLACK_NAME: _ONE}, "<=", _ONE))
    relaxed = LinearProgram(
        (*lp.variables, SLACK_NAME),
        tuple(rows),
        Objective("maximize", {SLACK_NAME: _ONE}),
        lp.free,
    )
    out = solve(relaxed)
    if out.status == "infeasible":
        return StrictOutcome("infeasible")
    assert out.status == "optimal", out.status
    delta = out.value
    assignment = {k: v for k, v in out.assignment.items() if k != SLACK_NAME}
    if delta > 0:
        return StrictOutcome("feasible", assignment, delta)
    return StrictOutcome("infeasible", assignment, _ZERO)

