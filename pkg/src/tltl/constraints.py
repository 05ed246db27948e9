"""Consistency checking for the constraint slice of a tableau atom.

An atom carries at most one dynamic constraint (``x < y`` or ``x = y``)
and a set of static constraints (``x ~ t + c`` or ``x ~ c``).  This module
decides satisfiability of such a set over the nonnegative rationals in
time linear in the number of constraints, and produces a concrete
satisfying valuation used by the witness builder.

All arithmetic is exact; no floats anywhere.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction

from .syntax import EQ, GT, LT, DynamicConstraint, StaticConstraint, TimeTerm

HALF = Fraction(1, 2)


class InconsistencyReason(enum.Enum):
    DUPLICATE_EQUALITY = "DuplicateEquality"
    EMPTY_INTERVAL = "EmptyInterval"
    NONNEGATIVITY_FAILURE = "NonnegativityFailure"


@dataclass(frozen=True)
class ConstraintSet:
    """Constraints of one atom: optional dynamic part plus static part."""

    dynamic: DynamicConstraint | None
    static: frozenset[StaticConstraint]

    @staticmethod
    def of(*constraints) -> "ConstraintSet":
        dyn = [c for c in constraints if isinstance(c, DynamicConstraint)]
        if len(dyn) > 1:
            raise ValueError("an atom carries at most one dynamic constraint")
        stat = frozenset(c for c in constraints if isinstance(c, StaticConstraint))
        return ConstraintSet(dyn[0] if dyn else None, stat)

    def __iter__(self):
        if self.dynamic is not None:
            yield self.dynamic
        yield from self.static

    def __len__(self):
        return len(self.static) + (0 if self.dynamic is None else 1)


@dataclass(frozen=True)
class ConstraintPartition:
    """The seven shape buckets the linear procedure dispatches on."""

    c_xy: frozenset
    c_eq_const: frozenset
    c_eq_var: frozenset
    c_gt_const: frozenset
    c_gt_var: frozenset
    c_lt_const: frozenset
    c_lt_var: frozenset

    def as_dict(self):
        return {
            "c_xy": self.c_xy,
            "c_eq_const": self.c_eq_const,
            "c_eq_var": self.c_eq_var,
            "c_gt_const": self.c_gt_const,
            "c_gt_var": self.c_gt_var,
            "c_lt_const": self.c_lt_const,
            "c_lt_var": self.c_lt_var,
        }


def partition(cs: ConstraintSet) -> ConstraintPartition:
    """Place every constraint in exactly one bucket by shape."""
    buckets = {key: set() for key in ("xy", "=c", "=v", ">c", ">v", "<c", "<v")}
    if cs.dynamic is not None:
        buckets["xy"].add(cs.dynamic)
    for c in cs.static:
        kind = "c" if c.term.var is None else "v"
        buckets[c.rel + kind].add(c)
    return ConstraintPartition(
        c_xy=frozenset(buckets["xy"]),
        c_eq_const=frozenset(buckets["=c"]),
        c_eq_var=frozenset(buckets["=v"]),
        c_gt_const=frozenset(buckets[">c"]),
        c_gt_var=frozenset(buckets[">v"]),
        c_lt_const=frozenset(buckets["<c"]),
        c_lt_var=frozenset(buckets["<v"]),
    )


@dataclass(frozen=True)
class Valuation:
    """Concrete nonnegative rational values for x, y and the timing variables."""

    x_val: Fraction
    y_val: Fraction
    timing: dict[str, Fraction] = field(default_factory=dict)

    def term_value(self, term: TimeTerm) -> Fraction:
        base = Fraction(0) if term.var is None else self.timing[term.var]
        return base + term.const

    def satisfies(self, c) -> bool:
        if isinstance(c, DynamicConstraint):
            return self.x_val < self.y_val if c.rel == LT else self.x_val == self.y_val
        rhs = self.term_value(c.term)
        if c.rel == LT:
            return self.x_val < rhs
        if c.rel == EQ:
            return self.x_val == rhs
        return self.x_val > rhs

    def satisfies_all(self, cs: ConstraintSet) -> bool:
        return all(self.satisfies(c) for c in cs)


@dataclass(frozen=True)
class Verdict:
    """Outcome of a consistency check; carries a model or a reason."""

    valuation: Valuation | None
    reason: InconsistencyReason | None
    ops: int = 0

    @property
    def consistent(self) -> bool:
        return self.valuation is not None


class _Infeasible(Exception):
    def __init__(self, reason):
        self.reason = reason


class _Bounds:
    """Exact bound tracker for one variable.

    Keeps an optional pin (equality), a lower bound (strict or closed,
    starting at the closed domain floor 0) and a strict upper bound.  Each
    bound remembers the inconsistency reason to report when violated.
    """

    def __init__(self):
        self.pin = None
        self.lo = Fraction(0)
        self.lo_strict = False
        self.lo_reason = InconsistencyReason.EMPTY_INTERVAL
        self.hi = None

    def require_eq(self, v):
        if self.pin is not None and self.pin != v:
            raise _Infeasible(InconsistencyReason.EMPTY_INTERVAL)
        self.pin = v

    def require_gt(self, v, strict=True, reason=InconsistencyReason.EMPTY_INTERVAL):
        if v > self.lo or (v == self.lo and strict and not self.lo_strict):
            self.lo, self.lo_strict, self.lo_reason = v, strict, reason

    def require_lt(self, v):
        if self.hi is None or v < self.hi:
            self.hi = v

    def check_and_pick(self, integer=False):
        if self.pin is not None:
            if self.pin < self.lo or (self.pin == self.lo and self.lo_strict):
                raise _Infeasible(self.lo_reason)
            if self.hi is not None and self.pin >= self.hi:
                raise _Infeasible(InconsistencyReason.EMPTY_INTERVAL)
            if integer and self.pin.denominator != 1:
                raise _Infeasible(InconsistencyReason.EMPTY_INTERVAL)
            return self.pin
        if self.hi is not None and self.lo >= self.hi:
            raise _Infeasible(self.lo_reason if self.lo > self.hi else InconsistencyReason.EMPTY_INTERVAL)
        return _pick(self.lo, self.lo_strict, self.hi, integer)


def _pick(lo, lo_strict, hi, integer=False):
    """Deterministic value in the window: half a unit above the lower end,
    falling back to the midpoint when that would overshoot.  In integer
    mode the smallest admissible integer is chosen instead."""
    if integer:
        floor = lo.numerator // lo.denominator
        candidate = Fraction(floor + 1) if (lo_strict or floor < lo) else lo
        if hi is not None and candidate >= hi:
            raise _Infeasible(InconsistencyReason.EMPTY_INTERVAL)
        return candidate
    if not lo_strict and hi is None:
        return lo
    candidate = lo + HALF
    if hi is not None and candidate >= hi:
        candidate = (lo + hi) / 2
    return candidate


def _solve(cs: ConstraintSet, x_lo=None, x_hi=None, fixed_timing=None, x_eq=None, integer=False):
    """Shared body of check_consistent / solve_with_bounds.

    Returns (Valuation, ops); raises _Infeasible otherwise.  Follows the
    shape dispatch of the linear consistency procedure, with constraints
    grouped per timing variable so a variable occurring in several
    constraints receives a single value.
    """
    ops = 0
    fixed = {k: Fraction(v) for k, v in (fixed_timing or {}).items()}

    xb = _Bounds()
    if x_lo is not None:
        xb.require_gt(Fraction(x_lo), strict=False)
    if x_hi is not None:
        xb.require_lt(Fraction(x_hi))
    if x_eq is not None:
        xb.require_eq(Fraction(x_eq))

    # constants (and constraints over pinned variables) bound x directly;
    # constraints over free timing variables are grouped per variable
    per_var: dict[str, dict[str, list[int]]] = {}
    eq_consts = set()
    for c in cs.static:
        ops += 1
        if c.term.var is None:
            v = Fraction(c.term.const)
            if c.rel == EQ:
                eq_consts.add(v)
            elif c.rel == GT:
                xb.require_gt(v)
            else:
                xb.require_lt(v)
        elif c.term.var in fixed:
            v = fixed[c.term.var] + c.term.const
            if c.rel == EQ:
                xb.require_eq(v)
            elif c.rel == GT:
                xb.require_gt(v)
            else:
                xb.require_lt(v)
        else:
            group = per_var.setdefault(c.term.var, {EQ: [], LT: [], GT: []})
            group[c.rel].append(c.term.const)

    if len(eq_consts) > 1:
        raise _Infeasible(InconsistencyReason.DUPLICATE_EQUALITY)
    for v in eq_consts:
        xb.require_eq(v)

    # fold per-variable feasibility back into bounds on x
    for var, group in per_var.items():
        ops += 1
        if group[EQ]:
            if len(set(group[EQ])) > 1:
                raise _Infeasible(InconsistencyReason.DUPLICATE_EQUALITY)
            c_eq = group[EQ][0]
            # alpha = x - c_eq must be nonnegative
            xb.require_gt(
                Fraction(c_eq), strict=False, reason=InconsistencyReason.NONNEGATIVITY_FAILURE
            )
            for c2 in group[LT]:  # alpha > x - c2 needs c2 > c_eq
                if not c2 > c_eq:
                    raise _Infeasible(InconsistencyReason.EMPTY_INTERVAL)
            for c3 in group[GT]:  # alpha < x - c3 needs c3 < c_eq
                if not c3 < c_eq:
                    raise _Infeasible(InconsistencyReason.EMPTY_INTERVAL)
        else:
            for c3 in group[GT]:
                # alpha < x - c3 with alpha >= 0 forces x > c3
                xb.require_gt(Fraction(c3), reason=InconsistencyReason.NONNEGATIVITY_FAILURE)
            if group[LT] and group[GT] and not min(group[LT]) > max(group[GT]):
                raise _Infeasible(InconsistencyReason.EMPTY_INTERVAL)

    x = xb.check_and_pick(integer)

    # timing assignments under the chosen x
    timing = dict(fixed)
    for var, group in per_var.items():
        ops += 1
        if group[EQ]:
            alpha = x - group[EQ][0]
            if integer and alpha.denominator != 1:
                raise _Infeasible(InconsistencyReason.EMPTY_INTERVAL)
        else:
            lo = max((x - c2 for c2 in group[LT]), default=None)  # strict lower
            hi = min((x - c3 for c3 in group[GT]), default=None)  # strict upper
            if lo is None or lo < 0:
                lo, lo_strict = Fraction(0), False
            else:
                lo_strict = True
            if hi is None:
                alpha = lo if not lo_strict else _pick(lo, True, None, integer)
            else:
                alpha = _pick(lo, lo_strict, hi, integer)
        if alpha < 0:  # pragma: no cover - excluded by the bound folding
            raise _Infeasible(InconsistencyReason.NONNEGATIVITY_FAILURE)
        timing[var] = alpha

    y = x if (cs.dynamic is not None and cs.dynamic.rel == EQ) else x + 1
    val = Valuation(x_val=x, y_val=y, timing=timing)
    for c in cs:
        ops += 1
        if not val.satisfies(c):  # pragma: no cover - internal soundness guard
            raise AssertionError(f"engine produced a non-model: {c} under {val}")
    return val, ops


def check_consistent(cs: ConstraintSet) -> Verdict:
    """Decide satisfiability over nonnegative rationals; linear time."""
    try:
        val, ops = _solve(cs)
    except _Infeasible as exc:
        return Verdict(valuation=None, reason=exc.reason, ops=0)
    return Verdict(valuation=val, reason=None, ops=ops)


def solve_with_bounds(
    cs: ConstraintSet,
    x_lo=None,
    x_hi_exclusive=None,
    fixed_timing=None,
    x_eq=None,
    integer=False,
) -> Valuation | None:
    """A model with ``x >= x_lo`` and ``x < x_hi_exclusive``, or None.

    ``fixed_timing`` pins timing variables to already-committed values,
    ``x_eq`` pins the clock itself, and ``integer`` restricts every pick
    to whole time units.
    """
    try:
        val, _ = _solve(
            cs,
            x_lo=x_lo,
            x_hi=x_hi_exclusive,
            fixed_timing=fixed_timing,
            x_eq=x_eq,
            integer=integer,
        )
    except _Infeasible:
        return None
    return val
