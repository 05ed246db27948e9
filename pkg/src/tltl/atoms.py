"""Atom enumeration over a closure universe.

An atom is a maximal consistent subset of the closure: boolean membership
is locally coherent (exactly one of a formula and its negation, the usual
or/until unfoldings), dynamic constraints pick exactly one of ``x < y`` /
``x = y``, every timing term gets exactly one of the three relations, the
chosen constraints are jointly satisfiable, the next-step flips between
the two dynamic constraints are present, and every chosen constraint
promises an eventual ``x > u``.

Two distinguished families of atoms anchor runs at time zero: clock-zero
atoms with ``x = y`` and clock-zero atoms with ``0 = x < y``.  In the
universes built for the default (initial-anchored) mode, clock-zero
``x < y`` atoms are additionally required to carry ``X (x > 0)``, which is
exactly what gives the two structural facts about incoming edges of the
zero atoms.  Enumeration is by free-choice bits (propositions, constraint
profile, next-formula memberships) with all other memberships derived, so
every produced subset satisfies the atom conditions by construction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .constraints import ConstraintSet, check_consistent
from .syntax import (
    EQ,
    GT,
    LT,
    RELATIONS,
    TRUE,
    BoolConst,
    ClosureSet,
    DynamicConstraint,
    Formula,
    Next,
    Not,
    Or,
    Prop,
    StaticConstraint,
    TimeTerm,
    Until,
    closure_of,
    eventually,
    size,
)

ZERO = TimeTerm(None, 0)

# Formulas added to the closure universe in initial-anchored mode: the
# dynamic pair, the clock-zero constraint triple and the promise that the
# clock leaves zero (closure rules generate the rest of the machinery).
INITIAL_SEED = (
    DynamicConstraint(EQ),
    StaticConstraint(EQ, ZERO),
    Next(StaticConstraint(GT, ZERO)),
)


@dataclass(frozen=True)
class Atom:
    """A maximal consistent closure subset; members are universe indices."""

    id: int
    members: frozenset[int]


class Universe:
    """Indexed closure universe plus the bookkeeping enumeration needs."""

    def __init__(self, cl: ClosureSet, initial_mode: bool = False):
        self.closure = cl
        self.initial_mode = initial_mode
        self.formulas = sorted(cl.members, key=lambda f: (size(f), str(f)))
        self.index = {f: i for i, f in enumerate(self.formulas)}

        self.prop_names = sorted({f.name for f in self.formulas if isinstance(f, Prop)})
        self.prop_ids = {p: self.index[Prop(p)] for p in self.prop_names}
        self.dyn_ids = {
            f.rel: i for f, i in self.index.items() if isinstance(f, DynamicConstraint)
        }
        self.terms = sorted(
            {f.term for f in self.formulas if isinstance(f, StaticConstraint)},
            key=lambda t: (t.var or "", t.const),
        )
        self.static_ids = {
            (f.term, f.rel): i for f, i in self.index.items() if isinstance(f, StaticConstraint)
        }
        self.next_pairs = [
            (i, self.index[f.operand]) for f, i in self.index.items() if isinstance(f, Next)
        ]
        self.next_pairs.sort()
        self.next_ids = [nid for nid, _ in self.next_pairs]
        self.untils = sorted(
            (self.index[f], self.index[f.left], self.index[f.right], self.index[Next(f)])
            for f in self.formulas
            if isinstance(f, Until)
        )
        self.true_id = self.index[TRUE]
        self.next_true_id = self.index[Next(TRUE)]

    # -- membership helpers ----------------------------------------------

    def formula(self, i: int) -> Formula:
        return self.formulas[i]

    def constraints_of(self, members: frozenset[int]) -> ConstraintSet:
        chosen = [
            f
            for f in (self.formulas[i] for i in members)
            if isinstance(f, (DynamicConstraint, StaticConstraint))
        ]
        return ConstraintSet.of(*chosen)

    def props_of(self, members: frozenset[int]) -> frozenset[str]:
        return frozenset(p for p in self.prop_names if self.prop_ids[p] in members)

    def static_profile(self, members: frozenset[int]) -> tuple[str, ...]:
        """Per-term relation held by the atom, in self.terms order."""
        out = []
        for term in self.terms:
            rel = next(r for r in RELATIONS if self.static_ids[(term, r)] in members)
            out.append(rel)
        return tuple(out)

    def dynamic_of(self, members: frozenset[int]):
        for rel, i in self.dyn_ids.items():
            if i in members:
                return rel
        return None

    def is_initial_eq(self, members: frozenset[int]) -> bool:
        zero = self.static_ids.get((ZERO, EQ))
        return zero is not None and zero in members and self.dyn_ids.get(EQ) in members

    def is_initial_lt(self, members: frozenset[int]) -> bool:
        zero = self.static_ids.get((ZERO, EQ))
        return zero is not None and zero in members and self.dyn_ids.get(LT) in members

    def is_initial(self, members: frozenset[int]) -> bool:
        return self.is_initial_eq(members) or self.is_initial_lt(members)

    # -- enumeration ------------------------------------------------------

    def _constraint_profiles(self):
        """Consistent (dynamic choice, per-term relation) combinations."""
        dyn_options = sorted(self.dyn_ids) if self.dyn_ids else [None]
        profiles = []
        for dyn in dyn_options:
            for rels in itertools.product(RELATIONS, repeat=len(self.terms)):
                chosen = [DynamicConstraint(dyn)] if dyn else []
                chosen += [StaticConstraint(r, t) for t, r in zip(self.terms, rels)]
                if check_consistent(ConstraintSet.of(*chosen)).consistent:
                    profiles.append((dyn, rels))
        return profiles

    def _forced_next_ids(self, dyn, rels):
        """Next-memberships the atom conditions force for this profile."""
        forced = {self.next_true_id}
        if dyn == LT:
            forced.add(self.index[Next(DynamicConstraint(EQ))])
        elif dyn == EQ:
            forced.add(self.index[Next(DynamicConstraint(LT))])
        for term, rel in zip(self.terms, rels):
            if rel != GT:
                # the promise true U (x > u) must be kept through the next state
                forced.add(self.index[Next(eventually(StaticConstraint(GT, term)))])
        if self.initial_mode and dyn == LT:
            zero_eq = self.static_ids.get((ZERO, EQ))
            if zero_eq is not None and rels[self.terms.index(ZERO)] == EQ:
                forced.add(self.index[Next(StaticConstraint(GT, ZERO))])
        return forced

    def _instructions(self):
        """Derivation program: one step per universe formula, children first.

        The size-sorted formula order is topological (a node is strictly
        larger than its children), so a single forward pass derives every
        membership from the free bits.
        """
        program = []
        for i, f in enumerate(self.formulas):
            if isinstance(f, BoolConst):
                program.append(("const", f.value, 0))
            elif isinstance(f, (Prop, DynamicConstraint, StaticConstraint, Next)):
                program.append(("bit", i, 0))
            elif isinstance(f, Or):
                program.append(("or", self.index[f.left], self.index[f.right]))
            elif isinstance(f, Until):
                # right now, or left now with the promise carried to the next state
                program.append(("until", self.index[f.right], (self.index[f.left], self.index[Next(f)])))
            elif isinstance(f, Not):
                program.append(("not", self.index[f.operand], 0))
            else:  # pragma: no cover
                raise TypeError(f"unexpected formula {f!r}")
        return program

    def enumerate(self) -> list[Atom]:
        """All atoms over this universe, with deterministic ids."""
        program = self._instructions()
        n = len(self.formulas)
        member_sets = []
        for dyn, rels in self._constraint_profiles():
            forced = self._forced_next_ids(dyn, rels)
            free = [i for i in self.next_ids if i not in forced]
            base = [False] * n
            for i, (kind, a, _b) in enumerate(program):
                if kind == "const":
                    base[i] = a
            if dyn is not None:
                base[self.dyn_ids[dyn]] = True
            for term, rel in zip(self.terms, rels):
                base[self.static_ids[(term, rel)]] = True
            for i in forced:
                base[i] = True
            prop_idx = [self.prop_ids[p] for p in self.prop_names]
            for props in itertools.product((False, True), repeat=len(self.prop_names)):
                for bits in itertools.product((False, True), repeat=len(free)):
                    mem = list(base)
                    for i, v in zip(prop_idx, props):
                        mem[i] = v
                    for i, v in zip(free, bits):
                        mem[i] = v
                    for i, (kind, a, b) in enumerate(program):
                        if kind == "or":
                            mem[i] = mem[a] or mem[b]
                        elif kind == "not":
                            mem[i] = not mem[a]
                        elif kind == "until":
                            mem[i] = mem[a] or (mem[b[0]] and mem[b[1]])
                    member_sets.append(frozenset(i for i in range(n) if mem[i]))
        member_sets.sort(key=sorted)
        return [Atom(i, m) for i, m in enumerate(member_sets)]


def build_universe(body: Formula, initial_mode: bool = True) -> Universe:
    """Closure universe for a formula, enriched with the zero-time machinery
    when the initial-anchored mode is active."""
    seeds = [body, *INITIAL_SEED] if initial_mode else [body]
    cl = ClosureSet(closure_of(seeds), body)
    return Universe(cl, initial_mode=initial_mode)


def enumerate_atoms(cl: ClosureSet, initial_mode: bool = True) -> list[Atom]:
    """Spec surface: enumerate the atoms of a closure universe."""
    return Universe(cl, initial_mode=initial_mode).enumerate()
