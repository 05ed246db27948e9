"""Syntax of timeout-extended linear temporal logic.

AST node types, the concrete-syntax parser, a round-tripping printer,
negation with double-negation collapse, and the Fischer-Ladner closure.

The logic speaks about a global clock ``x``, the minimum-timeout variable
``y`` and universally quantified static timing variables.  Atomic
constraints compare ``x`` against ``y`` (dynamic constraints, only ``<``
and ``=``) or against ``t + c`` / ``c`` terms (static constraints).
"""

from __future__ import annotations

from dataclasses import dataclass

LT = "<"
EQ = "="
GT = ">"
RELATIONS = (LT, EQ, GT)


class TltlError(Exception):
    """Base class for all errors raised by this package."""


class TltlSyntaxError(TltlError):
    """Malformed concrete syntax; carries the offending position."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class IllegalConstraint(TltlSyntaxError):
    """Constraint shape the logic forbids, e.g. ``x > y`` or ``t1 < t2``."""


class NegativeConstant(TltlSyntaxError):
    """Negative integer literal where a time constant was expected."""


@dataclass(frozen=True, slots=True)
class TimeTerm:
    """Right-hand side of a static constraint: ``t + c`` or a bare ``c``."""

    var: str | None
    const: int

    def __post_init__(self):
        if self.const < 0:
            raise ValueError(f"negative time constant {self.const}")

    def __str__(self):
        if self.var is None:
            return str(self.const)
        if self.const == 0:
            return self.var
        return f"{self.var} + {self.const}"


class Formula:
    """Base class of all formula nodes.  Instances are immutable."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class BoolConst(Formula):
    value: bool

    def __str__(self):
        return "true" if self.value else "false"


TRUE = BoolConst(True)
FALSE = BoolConst(False)


@dataclass(frozen=True, slots=True)
class Prop(Formula):
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True, slots=True)
class DynamicConstraint(Formula):
    """Comparison of the clock against the minimum timeout: ``x < y``/``x = y``."""

    rel: str

    def __post_init__(self):
        if self.rel not in (LT, EQ):
            raise ValueError(f"dynamic constraint relation must be < or =, got {self.rel!r}")

    def __str__(self):
        return f"x {self.rel} y"


@dataclass(frozen=True, slots=True)
class StaticConstraint(Formula):
    """Comparison of the clock against a timing term: ``x < u``/``x = u``/``x > u``."""

    rel: str
    term: TimeTerm

    def __post_init__(self):
        if self.rel not in RELATIONS:
            raise ValueError(f"static constraint relation must be one of <,=,>, got {self.rel!r}")

    def __str__(self):
        return f"x {self.rel} {self.term}"


@dataclass(frozen=True, slots=True)
class Not(Formula):
    operand: Formula

    def __post_init__(self):
        # Double negation and negated constants never appear as nodes;
        # build negations through negate() which collapses them.
        if isinstance(self.operand, (Not, BoolConst)):
            raise ValueError("use negate() so that !! and !true/!false collapse")

    def __str__(self):
        return f"!{_pp(self.operand, 4)}"


@dataclass(frozen=True, slots=True)
class Or(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return f"{_pp(self.left, 1)} | {_pp(self.right, 2)}"


@dataclass(frozen=True, slots=True)
class Next(Formula):
    operand: Formula

    def __str__(self):
        return f"X {_pp(self.operand, 4)}"


@dataclass(frozen=True, slots=True)
class Until(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return f"{_pp(self.left, 3)} U {_pp(self.right, 2)}"


# Binding strength used by the printer; parenthesise a child whenever its
# own level is below what the context requires.
_LEVELS = {
    Or: 1,
    Until: 2,
    Not: 4,
    Next: 4,
}


def _level(f):
    return _LEVELS.get(type(f), 5)


def _pp(f, need):
    text = str(f)
    return f"({text})" if _level(f) < need else text


def negate(f: Formula) -> Formula:
    """Negation with the collapses !!psi = psi, !true = false, !false = true."""
    if isinstance(f, Not):
        return f.operand
    if isinstance(f, BoolConst):
        return FALSE if f.value else TRUE
    return Not(f)


def conj(a: Formula, b: Formula) -> Formula:
    """``a & b`` desugared to ``!(!a | !b)``."""
    return negate(Or(negate(a), negate(b)))


def implies(a: Formula, b: Formula) -> Formula:
    return Or(negate(a), b)


def iff(a: Formula, b: Formula) -> Formula:
    return conj(implies(a, b), implies(b, a))


def eventually(f: Formula) -> Formula:
    return Until(TRUE, f)


def always(f: Formula) -> Formula:
    return negate(Until(TRUE, negate(f)))


def size(f: Formula) -> int:
    """Number of AST nodes after desugaring.

    Atomic constraints count two nodes: the comparison node and its
    operand (the time term, or the ``y`` slot of a dynamic constraint).
    """
    if isinstance(f, (DynamicConstraint, StaticConstraint)):
        return 2
    if isinstance(f, (BoolConst, Prop)):
        return 1
    if isinstance(f, (Not, Next)):
        return 1 + size(f.operand)
    if isinstance(f, (Or, Until)):
        return 1 + size(f.left) + size(f.right)
    raise TypeError(f"not a formula: {f!r}")


def subformulas(f: Formula):
    """All nodes of the AST, the formula itself included."""
    yield f
    if isinstance(f, (Not, Next)):
        yield from subformulas(f.operand)
    elif isinstance(f, (Or, Until)):
        yield from subformulas(f.left)
        yield from subformulas(f.right)


def propositions(f: Formula) -> frozenset[str]:
    return frozenset(g.name for g in subformulas(f) if isinstance(g, Prop))


def static_terms(f: Formula) -> frozenset[TimeTerm]:
    return frozenset(g.term for g in subformulas(f) if isinstance(g, StaticConstraint))


def timing_variables(f: Formula) -> list[str]:
    """Timing variables of ``f`` in order of first occurrence."""
    seen = []
    for g in subformulas(f):
        if isinstance(g, StaticConstraint) and g.term.var is not None:
            if g.term.var not in seen:
                seen.append(g.term.var)
    return seen


@dataclass(frozen=True)
class QuantifiedFormula:
    """A closed formula: every timing variable is universally bound."""

    bound_vars: tuple[str, ...]
    body: Formula

    def __post_init__(self):
        free = set(timing_variables(self.body)) - set(self.bound_vars)
        if free:
            raise ValueError(f"unbound timing variables: {sorted(free)}")

    def __str__(self):
        if not self.bound_vars:
            return str(self.body)
        return f"forall {', '.join(self.bound_vars)}. {self.body}"


def quantify(body: Formula) -> QuantifiedFormula:
    """Bind the free timing variables of ``body`` in first-occurrence order."""
    return QuantifiedFormula(tuple(timing_variables(body)), body)


# --- parser -----------------------------------------------------------------

_KEYWORDS = {"true", "false", "U", "X", "F", "G", "x", "y"}

_SYMBOLS = ("<->", "<=", "->", ">=", "<", ">", "=", "(", ")", "!", "&", "|", "+", "-")


class _Tokenizer:
    def __init__(self, text):
        self.text = text
        self.pos = 0
        self.tokens = []
        self._scan()
        self.index = 0

    def _scan(self):
        text = self.text
        i = 0
        while i < len(text):
            ch = text[i]
            if ch.isspace():
                i += 1
                continue
            matched = False
            for sym in _SYMBOLS:
                if text.startswith(sym, i):
                    self.tokens.append((sym, sym, i))
                    i += len(sym)
                    matched = True
                    break
            if matched:
                continue
            if ch.isdigit():
                j = i
                while j < len(text) and text[j].isdigit():
                    j += 1
                self.tokens.append(("NAT", text[i:j], i))
                i = j
                continue
            if ch.isalpha() or ch == "_":
                j = i
                while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                word = text[i:j]
                kind = word if word in _KEYWORDS else "IDENT"
                self.tokens.append((kind, word, i))
                i = j
                continue
            raise TltlSyntaxError(f"unexpected character {ch!r}", i)
        self.tokens.append(("EOF", "", len(text)))

    def peek(self):
        return self.tokens[self.index]

    def next(self):
        tok = self.tokens[self.index]
        self.index += 1
        return tok

    def expect(self, kind):
        tok = self.next()
        if tok[0] != kind:
            raise TltlSyntaxError(f"expected {kind!r}, found {tok[1]!r}", tok[2])
        return tok


class _Parser:
    """Recursive descent over: <-> | -> | '|' | & | U | unary | atom."""

    def __init__(self, text):
        self.toks = _Tokenizer(text)

    def parse(self):
        f = self._iff()
        tok = self.toks.peek()
        if tok[0] != "EOF":
            raise TltlSyntaxError(f"unexpected trailing input {tok[1]!r}", tok[2])
        return f

    def _iff(self):
        f = self._implies()
        while self.toks.peek()[0] == "<->":
            self.toks.next()
            f = iff(f, self._implies())
        return f

    def _implies(self):
        f = self._or()
        if self.toks.peek()[0] == "->":
            self.toks.next()
            return implies(f, self._implies())
        return f

    def _or(self):
        f = self._and()
        while self.toks.peek()[0] == "|":
            self.toks.next()
            f = Or(f, self._and())
        return f

    def _and(self):
        f = self._until()
        while self.toks.peek()[0] == "&":
            self.toks.next()
            f = conj(f, self._until())
        return f

    def _until(self):
        f = self._unary()
        if self.toks.peek()[0] == "U":
            self.toks.next()
            return Until(f, self._until())
        return f

    def _unary(self):
        kind, _, _ = self.toks.peek()
        if kind == "!":
            self.toks.next()
            return negate(self._unary())
        if kind == "X":
            self.toks.next()
            return Next(self._unary())
        if kind == "F":
            self.toks.next()
            return eventually(self._unary())
        if kind == "G":
            self.toks.next()
            return always(self._unary())
        return self._atom()

    def _atom(self):
        kind, word, pos = self.toks.next()
        if kind == "(":
            f = self._iff()
            self.toks.expect(")")
            return f
        if kind == "true":
            return TRUE
        if kind == "false":
            return FALSE
        if kind == "x":
            return self._constraint(pos)
        if kind in ("y", "NAT"):
            raise IllegalConstraint("constraints must have the clock x on the left", pos)
        if kind == "IDENT":
            nxt = self.toks.peek()
            if nxt[0] in ("<", "<=", "=", ">=", ">"):
                raise IllegalConstraint(
                    f"constraints between timing variables are not allowed ({word} ...)", pos
                )
            return Prop(word)
        raise TltlSyntaxError(f"unexpected token {word!r}", pos)

    def _constraint(self, pos):
        rel_tok = self.toks.next()
        rel = rel_tok[0]
        if rel not in ("<", "<=", "=", ">=", ">"):
            raise TltlSyntaxError(f"expected a comparison after x, found {rel_tok[1]!r}", rel_tok[2])
        if self.toks.peek()[0] == "y":
            self.toks.next()
            if rel == "<":
                return DynamicConstraint(LT)
            if rel == "=":
                return DynamicConstraint(EQ)
            if rel == "<=":
                return Or(DynamicConstraint(LT), DynamicConstraint(EQ))
            raise IllegalConstraint("x > y (and x >= y) is not a valid formula", rel_tok[2])
        term = self._term()
        if rel == "<=":
            return Or(StaticConstraint(LT, term), StaticConstraint(EQ, term))
        if rel == ">=":
            return Or(StaticConstraint(GT, term), StaticConstraint(EQ, term))
        return StaticConstraint(rel, term)

    def _term(self):
        kind, word, pos = self.toks.next()
        if kind == "-":
            nxt = self.toks.peek()
            raise NegativeConstant(f"negative time constant -{nxt[1]}", pos)
        if kind == "NAT":
            return TimeTerm(None, int(word))
        if kind == "IDENT":
            if self.toks.peek()[0] == "+":
                self.toks.next()
                sign = self.toks.peek()
                if sign[0] == "-":
                    raise NegativeConstant("negative time constant", sign[2])
                const = self.toks.expect("NAT")
                return TimeTerm(word, int(const[1]))
            return TimeTerm(word, 0)
        if kind in ("x", "y"):
            raise IllegalConstraint(f"{word} cannot appear on the right of a static constraint", pos)
        raise TltlSyntaxError(f"expected a timing term, found {word!r}", pos)


def parse_formula(text: str) -> Formula:
    """Parse the concrete syntax into an (unquantified) formula."""
    return _Parser(text).parse()


def parse(text: str) -> QuantifiedFormula:
    """Parse and close the formula by auto-binding free timing variables."""
    return quantify(parse_formula(text))


def print_formula(f: Formula) -> str:
    """Emit concrete syntax that reparses to a structurally equal AST."""
    return str(f)


# --- Fischer-Ladner closure --------------------------------------------------


@dataclass(frozen=True)
class ClosureSet:
    """The closure of ``origin``: the alphabet the tableau atoms draw from."""

    members: frozenset[Formula]
    origin: Formula

    def __len__(self):
        return len(self.members)

    def __contains__(self, f):
        return f in self.members

    def __iter__(self):
        return iter(self.members)


def _closure_step(f: Formula, add) -> None:
    """Emit the formulas the closure rules require for member ``f``."""
    if isinstance(f, Not):
        add(f.operand)
        if isinstance(f.operand, Next):
            add(Next(negate(f.operand.operand)))
    elif isinstance(f, Or):
        add(f.left)
        add(f.right)
    elif isinstance(f, Next):
        add(f.operand)
    elif isinstance(f, Until):
        add(f.left)
        add(f.right)
        add(Next(f))
    elif isinstance(f, DynamicConstraint):
        add(DynamicConstraint(LT))
        add(DynamicConstraint(EQ))
        if f.rel == LT:
            add(Next(DynamicConstraint(EQ)))
            add(eventually(DynamicConstraint(LT)))
        else:
            add(Next(DynamicConstraint(LT)))
            add(eventually(DynamicConstraint(EQ)))
    elif isinstance(f, StaticConstraint):
        for rel in RELATIONS:
            add(StaticConstraint(rel, f.term))
        add(eventually(StaticConstraint(GT, f.term)))


def closure_of(formulas) -> frozenset[Formula]:
    """Least set containing ``formulas`` closed under the closure rules."""
    members = {TRUE, FALSE, Next(TRUE)}
    work = list(formulas)
    for p in {g.name for f in work for g in subformulas(f) if isinstance(g, Prop)}:
        work.append(Prop(p))
        work.append(negate(Prop(p)))
    while work:
        f = work.pop()
        if f in members:
            continue
        members.add(f)
        _closure_step(f, work.append)
    return frozenset(members)


def closure(f: Formula) -> ClosureSet:
    """Fischer-Ladner closure of an unquantified formula."""
    return ClosureSet(closure_of([f]), f)
