"""Timeout Kripke structures: model, text format, simulation, path delay.

A structure has locations labelled with propositions (and optionally
integer bindings for static timing variables), delay edges along which
the clock jumps to the minimum timeout, and discrete edges along which
one minimum-valued timeout is raised by an amount from a declared range
``[l, m]`` (or ``[l, *)`` for an open-ended range).

Text format (``#`` starts a comment)::

    timeouts N
    location ID [props{a b c}] [let{t0=1 t1=2}]
    init ID [ID ...]
    delay A -> B
    discrete A -[l,m]-> B
    discrete A -[l,*]-> B
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field

from .syntax import TltlError

STAR = None  # open-ended upper bound marker for discrete edges


class ModelError(TltlError):
    """Base class for structure-level errors."""


class FormatError(ModelError):
    pass


class DanglingEdge(ModelError):
    pass


class BadRange(ModelError):
    pass


class UnknownVariable(ModelError):
    pass


class Deadlock(ModelError):
    def __init__(self, location, step, computation=None):
        super().__init__(f"no transition enabled at location {location!r}, step {step}")
        self.location = location
        self.step = step
        self.computation = computation


class PathBudgetExceeded(ModelError):
    pass


@dataclass(frozen=True)
class Location:
    id: str
    props: frozenset[str] = frozenset()
    static_valuation: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class DelayEdge:
    src: str
    dst: str


@dataclass(frozen=True)
class DiscreteEdge:
    src: str
    lo: int
    hi: int | None  # None encodes the open-ended range marker
    dst: str


@dataclass(frozen=True)
class TimeoutKripkeStructure:
    locations: tuple[Location, ...]
    initial_ids: tuple[str, ...]
    timeout_count: int
    delay_edges: tuple[DelayEdge, ...]
    discrete_edges: tuple[DiscreteEdge, ...]

    def location(self, loc_id: str) -> Location:
        return self._by_id()[loc_id]

    def _by_id(self):
        return {loc.id: loc for loc in self.locations}

    def delay_from(self, loc_id: str):
        return [e for e in self.delay_edges if e.src == loc_id]

    def discrete_from(self, loc_id: str):
        return [e for e in self.discrete_edges if e.src == loc_id]


def validate(k: TimeoutKripkeStructure) -> None:
    """Structural invariants; raises a ModelError subclass on violation."""
    ids = {loc.id for loc in k.locations}
    if len(ids) != len(k.locations):
        raise FormatError("duplicate location ids")
    if k.timeout_count < 1:
        raise FormatError("at least one timeout is required")
    if not k.initial_ids:
        raise FormatError("no initial locations")
    for i in k.initial_ids:
        if i not in ids:
            raise DanglingEdge(f"initial location {i!r} is not declared")
    for e in k.delay_edges:
        if e.src not in ids or e.dst not in ids:
            raise DanglingEdge(f"delay edge {e.src} -> {e.dst} references a missing location")
    for e in k.discrete_edges:
        if e.src not in ids or e.dst not in ids:
            raise DanglingEdge(f"discrete edge {e.src} -> {e.dst} references a missing location")
        if e.lo < 1:
            raise BadRange(f"discrete edge {e.src} -> {e.dst}: lower bound must be positive")
        if e.hi is not None and e.lo > e.hi:
            raise BadRange(f"discrete edge {e.src} -> {e.dst}: empty range [{e.lo},{e.hi}]")
    for loc in k.locations:
        for var, v in loc.static_valuation.items():
            if v < 0:
                raise FormatError(f"location {loc.id}: negative binding {var}={v}")
    # static valuations must be constant along every run (one interpretation
    # per run, fixed by the initial location)
    by_id = k._by_id()
    succs = {loc.id: set() for loc in k.locations}
    for e in k.delay_edges:
        succs[e.src].add(e.dst)
    for e in k.discrete_edges:
        succs[e.src].add(e.dst)
    for init in k.initial_ids:
        base = by_id[init].static_valuation
        seen = {init}
        stack = [init]
        while stack:
            cur = stack.pop()
            val = by_id[cur].static_valuation
            for var, v in val.items():
                if var not in base:
                    raise UnknownVariable(
                        f"location {cur} binds {var}, which initial location {init} does not define"
                    )
                if base[var] != v:
                    raise FormatError(
                        f"location {cur} rebinds {var}={v}, but runs from {init} fix {var}={base[var]}"
                    )
            for s in succs[cur]:
                if s not in seen:
                    seen.add(s)
                    stack.append(s)


# --- text format ---------------------------------------------------------------

_LOC_RE = re.compile(
    r"^location\s+(\w+)(?:\s+props\{([^}]*)\})?(?:\s+let\{([^}]*)\})?\s*$"
)
_DISCRETE_RE = re.compile(r"^discrete\s+(\w+)\s*-\[\s*(\d+)\s*,\s*(\d+|\*)\s*\]->\s*(\w+)\s*$")
_DELAY_RE = re.compile(r"^delay\s+(\w+)\s*->\s*(\w+)\s*$")


def parse_tks(text: str) -> TimeoutKripkeStructure:
    """Parse and fully validate a structure from the text format."""
    locations = []
    initial: list[str] = []
    timeout_count = None
    delay = []
    discrete = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("timeouts"):
            parts = line.split()
            if len(parts) != 2 or not parts[1].isdigit():
                raise FormatError(f"line {lineno}: expected 'timeouts N'")
            timeout_count = int(parts[1])
            continue
        if line.startswith("location"):
            m = _LOC_RE.match(line)
            if not m:
                raise FormatError(f"line {lineno}: malformed location declaration")
            name, props, lets = m.groups()
            valuation = {}
            for item in (lets or "").split():
                if "=" not in item:
                    raise FormatError(f"line {lineno}: malformed binding {item!r}")
                var, val = item.split("=", 1)
                if not re.fullmatch(r"-?\d+", val):
                    raise FormatError(f"line {lineno}: binding {item!r} is not an integer")
                if int(val) < 0:
                    raise FormatError(f"line {lineno}: negative binding {item!r}")
                valuation[var] = int(val)
            locations.append(
                Location(name, frozenset((props or "").split()), valuation)
            )
            continue
        if line.startswith("init"):
            initial.extend(line.split()[1:])
            continue
        m = _DELAY_RE.match(line)
        if m:
            delay.append(DelayEdge(m.group(1), m.group(2)))
            continue
        m = _DISCRETE_RE.match(line)
        if m:
            src, lo, hi, dst = m.groups()
            discrete.append(
                DiscreteEdge(src, int(lo), STAR if hi == "*" else int(hi), dst)
            )
            continue
        raise FormatError(f"line {lineno}: unrecognised directive {line!r}")
    if timeout_count is None:
        raise FormatError("missing 'timeouts N' directive")
    k = TimeoutKripkeStructure(
        locations=tuple(locations),
        initial_ids=tuple(initial),
        timeout_count=timeout_count,
        delay_edges=tuple(delay),
        discrete_edges=tuple(discrete),
    )
    validate(k)
    return k


def print_tks(k: TimeoutKripkeStructure) -> str:
    lines = [f"timeouts {k.timeout_count}"]
    for loc in k.locations:
        parts = [f"location {loc.id}"]
        if loc.props:
            parts.append("props{" + " ".join(sorted(loc.props)) + "}")
        if loc.static_valuation:
            parts.append(
                "let{" + " ".join(f"{v}={loc.static_valuation[v]}" for v in sorted(loc.static_valuation)) + "}"
            )
        lines.append(" ".join(parts))
    lines.append("init " + " ".join(k.initial_ids))
    for e in k.delay_edges:
        lines.append(f"delay {e.src} -> {e.dst}")
    for e in k.discrete_edges:
        hi = "*" if e.hi is STAR else str(e.hi)
        lines.append(f"discrete {e.src} -[{e.lo},{hi}]-> {e.dst}")
    return "\n".join(lines) + "\n"


# --- path delay ------------------------------------------------------------------


def max_path_delay(k: TimeoutKripkeStructure, budget: int = 10**6) -> int:
    """Maximum over simple paths from any initial location of the summed
    maximal increments (open-ended ranges contribute their lower bound)."""
    out: dict[str, list[tuple[str, int]]] = {loc.id: [] for loc in k.locations}
    for e in k.delay_edges:
        out[e.src].append((e.dst, 0))
    for e in k.discrete_edges:
        out[e.src].append((e.dst, e.lo if e.hi is STAR else e.hi))
    best = 0
    explored = 0

    def dfs(node, total, on_path):
        nonlocal best, explored
        explored += 1
        if explored > budget:
            raise PathBudgetExceeded(f"more than {budget} partial paths explored")
        best = max(best, total)
        for dst, w in out[node]:
            if dst not in on_path:
                on_path.add(dst)
                dfs(dst, total + w, on_path)
                on_path.discard(dst)

    for init in k.initial_ids:
        dfs(init, 0, {init})
    return best


# --- simulation -------------------------------------------------------------------


@dataclass(frozen=True)
class Step:
    location: str
    x: int
    y: int
    timeouts: tuple[int, ...]
    fired: tuple  # ("init",) | ("delay", edge) | ("discrete", edge, timeout_index, delta)


@dataclass(frozen=True)
class TimeoutComputation:
    steps: tuple[Step, ...]
    deadlock: Deadlock | None = None


def _geometric(rng: random.Random) -> int:
    n = 0
    while rng.random() < 0.5:
        n += 1
    return n


def simulate(
    k: TimeoutKripkeStructure,
    steps: int,
    seed: int,
    initial_timeouts: tuple[int, ...] | None = None,
) -> TimeoutComputation:
    """Pseudo-random computation honouring the run semantics.

    Increments are drawn uniformly from ``[l, m]`` (or ``l`` plus a
    geometric offset for open ranges); reproducible per seed.  A deadlock
    ends the computation early and is reported on the result.
    """
    rng = random.Random(seed)
    loc = k.initial_ids[rng.randrange(len(k.initial_ids))]
    if initial_timeouts is not None:
        touts = list(initial_timeouts)
        if len(touts) != k.timeout_count:
            raise FormatError("wrong number of initial timeouts")
    else:
        cap = max(
            [e.lo if e.hi is STAR else e.hi for e in k.discrete_edges] or [1]
        )
        touts = [rng.randrange(0, cap + 1) for _ in range(k.timeout_count)]
        if rng.random() < 0.5:
            floor = min(touts)
            touts = [t - floor for t in touts]
    x = 0
    trace = [Step(loc, x, min(touts), tuple(touts), ("init",))]
    for i in range(steps):
        y = min(touts)
        if x < y:
            options = k.delay_from(loc)
            if not options:
                dead = Deadlock(loc, i)
                return TimeoutComputation(tuple(trace), dead)
            edge = options[rng.randrange(len(options))]
            x = y
            loc = edge.dst
            trace.append(Step(loc, x, min(touts), tuple(touts), ("delay", edge)))
        else:
            options = k.discrete_from(loc)
            if not options:
                dead = Deadlock(loc, i)
                return TimeoutComputation(tuple(trace), dead)
            edge = options[rng.randrange(len(options))]
            minimal = [j for j, t in enumerate(touts) if t == y]
            j = minimal[rng.randrange(len(minimal))]
            if edge.hi is STAR:
                delta = edge.lo + _geometric(rng)
            else:
                delta = rng.randrange(edge.lo, edge.hi + 1)
            touts[j] += delta
            loc = edge.dst
            trace.append(
                Step(loc, x, min(touts), tuple(touts), ("discrete", edge, j, delta))
            )
    return TimeoutComputation(tuple(trace))


# --- bundled example generator ------------------------------------------------------


def tta_example(n_nodes: int, slot: int) -> TimeoutKripkeStructure:
    """Simplified startup model of n nodes sharing a slotted bus.

    Each node cycles through init/listen/coldstart/active with the slot
    based timeout increments listen=(2N+i-1)*slot, coldstart=(N+i-1)*slot
    and round=N*slot.  Frame exchange is abstracted into nondeterministic
    branching, so this is a corpus model, not a faithful protocol.
    """
    if not 1 <= n_nodes <= 4:
        raise FormatError("n_nodes must be in 1..4")
    if slot < 1:
        raise FormatError("slot must be positive")
    states = ("init", "listen", "coldstart", "active")
    n = n_nodes

    def listen(i):
        return (2 * n + i - 1) * slot

    def cold(i):
        return (n + i - 1) * slot

    def rnd():
        return n * slot

    def loc_id(vec):
        return "_".join(f"n{i + 1}{s[:2]}" for i, s in enumerate(vec))

    vectors = [()]
    for _ in range(n):
        vectors = [v + (s,) for v in vectors for s in states]
    locations = []
    for vec in vectors:
        props = frozenset(f"{s}{i + 1}" for i, s in enumerate(vec))
        locations.append(Location(loc_id(vec), props, {}))
    delay = [DelayEdge(loc_id(v), loc_id(v)) for v in vectors]
    discrete = []
    moves = {
        "init": [("listen", listen)],
        "listen": [("coldstart", cold), ("active", lambda i: rnd())],
        "coldstart": [("coldstart", cold), ("active", lambda i: rnd())],
        "active": [("active", lambda i: rnd())],
    }
    for vec in vectors:
        for i, s in enumerate(vec):
            for target, inc in moves[s]:
                amount = inc(i + 1)
                nxt = vec[:i] + (target,) + vec[i + 1 :]
                discrete.append(DiscreteEdge(loc_id(vec), amount, amount, loc_id(nxt)))
    k = TimeoutKripkeStructure(
        locations=tuple(locations),
        initial_ids=(loc_id(("init",) * n),),
        timeout_count=n,
        delay_edges=tuple(delay),
        discrete_edges=tuple(discrete),
    )
    validate(k)
    return k
