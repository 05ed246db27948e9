"""Concrete timed witnesses for atom lassos, and witness validation.

A witness assigns exact rational values to the clock ``x``, the minimum
timeout ``y`` and the static timing variables along a lasso.  Values obey
the run semantics exactly: the two dynamic situations strictly alternate,
an ``x < y`` state is followed by the clock jumping to ``y`` (``y``
unchanged) and an ``x = y`` state is followed by ``y`` strictly rising
(``x`` unchanged).  Cycle states carry a per-iteration additive increment
so a finite structure denotes a diverging infinite run.

Validation re-checks everything from scratch: monotonicity, divergence,
the exact alternation rule, initiality, constancy of the timing values,
and finally the truth of the formula on the induced infinite sequence
(static-constraint truths stabilise after finitely many cycle turns, so
evaluation happens on a truth-stabilised finite quotient).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

from .constraints import ConstraintSet, Valuation, check_consistent, solve_with_bounds
from .syntax import (
    EQ,
    GT,
    LT,
    BoolConst,
    DynamicConstraint,
    Formula,
    Next,
    Not,
    Or,
    Prop,
    StaticConstraint,
    TltlError,
    Until,
    subformulas,
)


class InternalContradiction(TltlError):
    """A lasso admitted by the tableau has no exact value assignment.

    Surfaced loudly: it means the edge relation admitted a step the run
    semantics cannot realise (or an engine bug), never swallowed.
    """


@dataclass(frozen=True)
class TimedState:
    """One state of a witness; cycle states carry per-iteration increments."""

    atom_id: int
    x: Fraction
    y: Fraction
    props: frozenset[str] = frozenset()
    location: str | None = None
    x_inc: Fraction = Fraction(0)
    y_inc: Fraction = Fraction(0)

    def at(self, k: int) -> tuple[Fraction, Fraction]:
        return self.x + k * self.x_inc, self.y + k * self.y_inc


@dataclass(frozen=True)
class TimedWitness:
    prefix: tuple[TimedState, ...]
    cycle: tuple[TimedState, ...]
    timing: dict[str, Fraction] = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    def states(self, unroll: int = 1):
        """Prefix followed by ``unroll`` concrete cycle iterations."""
        out = list(self.prefix)
        for k in range(unroll):
            for s in self.cycle:
                x, y = s.at(k)
                out.append(
                    TimedState(s.atom_id, x, y, s.props, s.location, Fraction(0), Fraction(0))
                )
        return out


@dataclass(frozen=True)
class Report:
    violations: tuple[str, ...]
    formula_holds: bool | None

    @property
    def ok(self) -> bool:
        return not self.violations and bool(self.formula_holds)


# --- value assignment --------------------------------------------------------


def _dynamic_classes(universe, member_sets):
    if not universe.dyn_ids:
        return None
    classes = []
    for m in member_sets:
        rel = universe.dynamic_of(m)
        if rel is None:  # pragma: no cover - a5 guarantees a choice
            raise InternalContradiction("atom tracks no dynamic constraint")
        classes.append(rel)
    return classes


def _check_alternation(classes, prefix_len):
    n = len(classes)
    for i in range(n - 1):
        if classes[i] == classes[i + 1]:
            raise InternalContradiction("dynamic constraints fail to alternate along the lasso")
    if classes[n - 1] == classes[prefix_len]:
        raise InternalContradiction("dynamic constraints fail to alternate around the cycle seam")


def _statics_of(universe, members) -> ConstraintSet:
    stat = frozenset(
        f
        for f in (universe.formula(i) for i in members)
        if isinstance(f, StaticConstraint)
    )
    return ConstraintSet(None, stat)


def _holds_statics(cs: ConstraintSet, x, timing) -> bool:
    return Valuation(x_val=x, y_val=x + 1, timing=timing).satisfies_all(
        ConstraintSet(None, cs.static)
    )


def _attempt(tableau, atoms_seq, classes, prefix_len, integer):
    """One assignment attempt for fixed dynamic classes.  Commits the timing
    variables and the cycle-entry values first, walks the cycle forward,
    then traces the prefix backwards, never increasing values."""
    uni = tableau.universe
    k, total = prefix_len, len(atoms_seq)
    cyc_len = total - k
    members = [tableau.atoms[a].members for a in atoms_seq]

    entry_cs = uni.constraints_of(members[k])
    verdict = check_consistent(entry_cs)
    if not verdict.consistent:  # pragma: no cover - excluded by atom rule a8
        raise InternalContradiction("cycle entry constraints unsatisfiable")
    timing = dict(verdict.valuation.timing)
    x0, y0 = verdict.valuation.x_val, verdict.valuation.y_val
    if classes[k] == EQ:
        y0 = x0
    elif y0 <= x0:  # dynamic untracked: the engine default may need a lift
        y0 = x0 + 1

    # cycle statics must all be of the x > u form and hold at the entry
    for p in range(k, total):
        cs = _statics_of(uni, members[p])
        if any(c.rel != GT for c in cs.static):
            raise InternalContradiction("cycle atom carries a non-persistent static constraint")
    if not _holds_statics(entry_cs, x0, timing):  # pragma: no cover
        raise InternalContradiction("entry valuation drops its own statics")

    # forward walk over one cycle iteration, one time unit per y-raise
    delta_step = Fraction(1)
    vals = [(x0, y0)]
    for p in range(k + 1, total):
        px, py = vals[-1]
        if classes[p - 1] == EQ:
            vals.append((px, py + delta_step))
        else:
            vals.append((py, py))
    lx, ly = vals[-1]
    if classes[total - 1] == EQ:
        shift = lx - x0  # seam: x stays, y rises to y0 + shift
        if not (shift > 0 and y0 + shift > ly and lx == x0 + shift):
            raise InternalContradiction("cycle seam cannot rise")
    else:
        shift = ly - x0  # seam: clock jumps to y, y unchanged
        if not (shift > 0 and x0 + shift == ly and y0 + shift == ly):
            raise InternalContradiction("cycle seam does not close")
    for (cx, _cy), p in zip(vals, range(k, total)):
        if not _holds_statics(_statics_of(uni, members[p]), cx, timing):
            raise InternalContradiction("cycle valuation violates a static constraint")

    # backward walk over the prefix; values never increase (Lemma 1 shape)
    assigned = [None] * k
    nxt_x, nxt_y = x0, y0
    for i in range(k - 1, -1, -1):
        cs = _statics_of(uni, members[i])
        if classes[i] == EQ:
            xi = nxt_x
            yi = xi
            if not nxt_y > yi:
                raise InternalContradiction("y fails to rise after a timeout event")
            if not _holds_statics(cs, xi, timing):
                raise InternalContradiction("pinned clock value violates a static constraint")
        else:
            yi = nxt_x
            if nxt_y != yi:
                raise InternalContradiction("y changed across a clock jump")
            want_zero = i == 0
            val = None
            if want_zero:
                val = solve_with_bounds(
                    cs, x_lo=0, x_hi_exclusive=yi, fixed_timing=timing, x_eq=0, integer=integer
                )
            if val is None:
                val = solve_with_bounds(
                    cs, x_lo=0, x_hi_exclusive=yi, fixed_timing=timing, integer=integer
                )
            if val is None:
                raise InternalContradiction("no clock value fits below the pending timeout")
            xi = val.x_val
        if not (xi <= nxt_x and yi <= nxt_y):  # pragma: no cover - by construction
            raise InternalContradiction("backward pass increased a value")
        assigned[i] = (xi, yi)
        nxt_x, nxt_y = xi, yi

    prefix_states = tuple(
        TimedState(
            atom_id=atoms_seq[i],
            x=assigned[i][0],
            y=assigned[i][1],
            props=uni.props_of(members[i]),
        )
        for i in range(k)
    )
    cycle_states = tuple(
        TimedState(
            atom_id=atoms_seq[k + j],
            x=vals[j][0],
            y=vals[j][1],
            props=uni.props_of(members[k + j]),
            x_inc=shift,
            y_inc=shift,
        )
        for j in range(cyc_len)
    )
    return TimedWitness(prefix=prefix_states, cycle=cycle_states, timing=timing)


def assign_values(lasso, tableau, integer: bool = False) -> TimedWitness:
    """Concrete witness for a fulfilling lasso (prefix + cycle of atom ids)."""
    atoms_seq = list(lasso.prefix) + list(lasso.cycle)
    k = len(lasso.prefix)
    uni = tableau.universe
    member_sets = [tableau.atoms[a].members for a in atoms_seq]
    classes = _dynamic_classes(uni, member_sets)

    if classes is not None:
        if (len(atoms_seq) - k) % 2 != 0:
            raise InternalContradiction("alternation forces even cycles")
        _check_alternation(classes, k)
        return _attempt(tableau, atoms_seq, classes, k, integer)

    # dynamics untracked: choose an alternation; double odd cycles so the
    # chosen pattern is consistent around the seam
    if (len(atoms_seq) - k) % 2 != 0:
        atoms_seq = atoms_seq + list(lasso.cycle)
    last_error = None
    for parity in (0, 1):
        synthetic = [EQ if (i % 2 == parity) else LT for i in range(len(atoms_seq))]
        try:
            return _attempt(tableau, atoms_seq, synthetic, k, integer)
        except InternalContradiction as exc:
            last_error = exc
    raise last_error


def build_witness(sat_result, integer: bool = False, limit: int = 200):
    """First concretisable lasso of a satisfiable result.

    The edge relation may admit lassos that no exact run realises; those
    candidates are rejected and the search continues.  If no candidate
    concretises the contradiction is surfaced.
    """
    if not sat_result.satisfiable:
        raise ValueError("no witness for an unsatisfiable formula")
    last_error = None
    for lasso in sat_result.lasso_candidates(limit=limit):
        try:
            return lasso, assign_values(lasso, sat_result.tableau, integer=integer)
        except InternalContradiction as exc:
            last_error = exc
    raise last_error or InternalContradiction("no fulfilling lasso concretises")


# --- validation ---------------------------------------------------------------


def _affine(state: TimedState):
    return (state.x, state.x_inc), (state.y, state.y_inc)


def _aff_eq(a, b):
    return a[0] == b[0] and a[1] == b[1]


def _aff_gt(a, b):
    # a(k) > b(k) for every k >= 0
    return a[0] > b[0] and a[1] >= b[1]


def _aff_shift(a):
    return (a[0] + a[1], a[1])


def _step_violations(x_a, y_a, x_b, y_b, idx):
    """Exact transition rule between consecutive states, for all iterations."""
    out = []
    if _aff_eq(x_a, y_a):
        if not _aff_eq(x_b, x_a):
            out.append(f"m3: clock moved across the timeout event at state {idx}")
        if not _aff_gt(y_b, y_a):
            out.append(f"m3: y failed to rise strictly after state {idx}")
    elif _aff_gt(y_a, x_a):
        if not _aff_eq(x_b, y_a):
            out.append(f"m3: clock did not jump to y after state {idx}")
        if not _aff_eq(y_b, y_a):
            out.append(f"m3: y changed during a clock advance after state {idx}")
    else:
        out.append(f"m3: x exceeds y at state {idx}")
    return out


def _atomic_truth(f, state_vals, props, timing):
    x, y = state_vals
    if isinstance(f, Prop):
        return f.name in props
    if isinstance(f, DynamicConstraint):
        return x < y if f.rel == LT else x == y
    if isinstance(f, StaticConstraint):
        rhs = (timing[f.term.var] if f.term.var is not None else Fraction(0)) + f.term.const
        if f.rel == LT:
            return x < rhs
        if f.rel == EQ:
            return x == rhs
        return x > rhs
    raise TypeError(f)


def _stabilisation_turns(witness: TimedWitness, terms) -> int:
    """Cycle turns after which every static-constraint truth is constant."""
    turns = 1
    for s in witness.cycle:
        if s.x_inc == 0:
            continue
        for term in terms:
            rhs = (witness.timing.get(term.var, Fraction(0)) if term.var else Fraction(0)) + term.const
            gap = rhs - s.x
            if gap >= 0:
                need = int(gap / s.x_inc) + 2
                turns = max(turns, need)
    return turns


def _evaluate_on_lasso(f: Formula, atoms_truth, loop_start, n):
    """Truth of ``f`` at position 0 on an ultimately periodic truth sequence.

    ``atoms_truth`` maps each atomic formula to a tuple of truths per
    position; position ``n-1`` loops back to ``loop_start``.  Untils are
    least fixpoints computed by iteration.
    """
    nxt = [i + 1 for i in range(n)]
    nxt[n - 1] = loop_start

    memo: dict[Formula, list[bool]] = {}

    def table(g) -> list[bool]:
        if g in memo:
            return memo[g]
        if isinstance(g, BoolConst):
            t = [g.value] * n
        elif isinstance(g, (Prop, DynamicConstraint, StaticConstraint)):
            t = list(atoms_truth[g])
        elif isinstance(g, Not):
            t = [not v for v in table(g.operand)]
        elif isinstance(g, Or):
            left, right = table(g.left), table(g.right)
            t = [a or b for a, b in zip(left, right)]
        elif isinstance(g, Next):
            inner = table(g.operand)
            t = [inner[nxt[i]] for i in range(n)]
        elif isinstance(g, Until):
            left, right = table(g.left), table(g.right)
            t = list(right)
            changed = True
            while changed:
                changed = False
                for i in range(n - 1, -1, -1):
                    v = t[i] or (left[i] and t[nxt[i]])
                    if v != t[i]:
                        t[i] = v
                        changed = True
        else:
            raise TypeError(g)
        memo[g] = t
        return t

    return table(f)[0]


def validate(witness: TimedWitness, f: Formula, mode: str = "rational") -> Report:
    """Check m1-m5 exactly and evaluate ``f`` on the induced run."""
    violations = []
    if not witness.cycle:
        return Report(("witness has an empty cycle",), None)

    all_states = list(witness.prefix) + list(witness.cycle)
    if mode == "integer":
        values = [v for s in all_states for v in (s.x, s.y, s.x_inc, s.y_inc)]
        values += list(witness.timing.values())
        for v in values:
            if Fraction(v).denominator != 1:
                violations.append(f"integer mode: non-integer value {v}")
                break
    for idx, s in enumerate(all_states):
        if s.x < 0 or s.y < 0:
            violations.append(f"negative value at state {idx}")
        if s.x_inc < 0 or s.y_inc < 0:
            violations.append(f"m1: negative cycle increment at state {idx}")

    # m4: runs start at clock zero with the timeout now or in the future
    first = all_states[0]
    if not (first.x == 0 and first.x <= first.y):
        violations.append("m4: run does not start with x = 0 <= y")

    # m3/m1 exactly: prefix steps (and the one-off junction into the cycle)
    # are checked concretely; in-cycle steps and the seam are affine
    # conditions that must hold on every cycle turn
    affs = [_affine(s) for s in all_states]
    k = len(witness.prefix)
    for i in range(len(all_states) - 1):
        xa, ya = affs[i]
        xb, yb = affs[i + 1]
        if i < k:  # this step happens exactly once, at the first turn
            xa, ya = (xa[0], Fraction(0)), (ya[0], Fraction(0))
            xb, yb = (xb[0], Fraction(0)), (yb[0], Fraction(0))
        violations.extend(_step_violations(xa, ya, xb, yb, i))
    lx, ly = affs[-1]
    sx, sy = affs[k]
    violations.extend(_step_violations(lx, ly, _aff_shift(sx), _aff_shift(sy), len(all_states) - 1))

    # m2: the clock must gain ground on every cycle turn
    if all(s.x_inc == 0 for s in witness.cycle):
        violations.append("m2: clock does not diverge (zero cycle increment)")

    # m5 holds by representation: a single timing map covers all states

    free = {
        g.term.var
        for g in subformulas(f)
        if isinstance(g, StaticConstraint) and g.term.var is not None
    }
    missing = free - set(witness.timing)
    if missing:
        violations.append(f"m5: witness binds no value for {sorted(missing)}")

    formula_holds = None
    if not violations:
        terms = [g.term for g in subformulas(f) if isinstance(g, StaticConstraint)]
        turns = _stabilisation_turns(witness, terms)
        concrete = witness.states(unroll=turns + 1)
        loop_start = len(witness.prefix) + turns * len(witness.cycle)
        atoms = {
            g: tuple(
                _atomic_truth(g, (s.x, s.y), s.props, witness.timing) for s in concrete
            )
            for g in subformulas(f)
            if isinstance(g, (Prop, DynamicConstraint, StaticConstraint))
        }
        formula_holds = _evaluate_on_lasso(f, atoms, loop_start, len(concrete))
    return Report(tuple(violations), formula_holds)


# --- serialisation -------------------------------------------------------------


def _frac(v: Fraction) -> str:
    return str(v)


def _state_doc(s: TimedState, with_inc: bool):
    doc = {
        "atom": s.atom_id,
        "x": _frac(s.x),
        "y": _frac(s.y),
        "props": sorted(s.props),
    }
    if s.location is not None:
        doc["location"] = s.location
    if with_inc:
        doc["x_inc"] = _frac(s.x_inc)
        doc["y_inc"] = _frac(s.y_inc)
    return doc


def witness_to_json(witness: TimedWitness) -> str:
    doc = {
        "timing": {k: _frac(v) for k, v in sorted(witness.timing.items())},
        "prefix": [_state_doc(s, False) for s in witness.prefix],
        "cycle": [_state_doc(s, True) for s in witness.cycle],
        "notes": list(witness.notes),
    }
    return json.dumps(doc, indent=2)


def _state_from(doc, cyclic) -> TimedState:
    return TimedState(
        atom_id=int(doc.get("atom", -1)),
        x=Fraction(doc["x"]),
        y=Fraction(doc["y"]),
        props=frozenset(doc.get("props", ())),
        location=doc.get("location"),
        x_inc=Fraction(doc.get("x_inc", 0)) if cyclic else Fraction(0),
        y_inc=Fraction(doc.get("y_inc", 0)) if cyclic else Fraction(0),
    )


def witness_from_json(text: str) -> TimedWitness:
    doc = json.loads(text)
    return TimedWitness(
        prefix=tuple(_state_from(d, False) for d in doc.get("prefix", ())),
        cycle=tuple(_state_from(d, True) for d in doc.get("cycle", ())),
        timing={k: Fraction(v) for k, v in doc.get("timing", {}).items()},
        notes=tuple(doc.get("notes", ())),
    )


def witness_to_text(witness: TimedWitness) -> str:
    lines = []
    if witness.timing:
        bound = ", ".join(f"{k} = {_frac(v)}" for k, v in sorted(witness.timing.items()))
        lines.append(f"timing: {bound}")
    header = f"{'#':>3} {'part':6} {'atom':>5} {'x':>8} {'y':>8}  props"
    lines.append(header)
    idx = 0
    for s in witness.prefix:
        loc = f" @{s.location}" if s.location else ""
        lines.append(
            f"{idx:>3} {'prefix':6} {s.atom_id:>5} {_frac(s.x):>8} {_frac(s.y):>8}  "
            f"{{{', '.join(sorted(s.props))}}}{loc}"
        )
        idx += 1
    for s in witness.cycle:
        loc = f" @{s.location}" if s.location else ""
        lines.append(
            f"{idx:>3} {'cycle':6} {s.atom_id:>5} {_frac(s.x):>8} {_frac(s.y):>8}  "
            f"{{{', '.join(sorted(s.props))}}}{loc}  (+{_frac(s.x_inc)}/{_frac(s.y_inc)} per turn)"
        )
        idx += 1
    for note in witness.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines)
