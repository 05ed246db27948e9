"""Tableau construction, pruning and the satisfiability/validity checks.

The tableau is a directed graph over atoms.  An edge agrees on every
next-formula (what one atom promises, the successor delivers), keeps
``x = u`` until it turns into ``x > u``, and never retracts ``x > u``.
Satisfiability holds when, after repeatedly deleting useless strongly
connected subgraphs (terminal but not self-fulfilling), some eligible
atom containing the formula can reach a terminal self-fulfilling SCS.

Two start policies are supported.  The default anchors runs at time zero
(the first atom carries ``x = 0`` with either dynamic constraint), which
matches the semantics of timed state sequences.  The literal policy
accepts any surviving atom containing the formula.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

from .atoms import Atom, Universe, build_universe
from .syntax import EQ, GT, LT, Formula, QuantifiedFormula, negate


class Mode(enum.Enum):
    START_INITIAL = "start-initial"
    PAPER_LITERAL = "paper-literal"


@dataclass(frozen=True)
class Lasso:
    """Finite description of an infinite atom path: prefix then cycle."""

    prefix: tuple[int, ...]
    cycle: tuple[int, ...]

    def states(self):
        return self.prefix + self.cycle


@dataclass(frozen=True)
class SCSInfo:
    atom_ids: tuple[int, ...]
    terminal: bool
    self_fulfilling: bool

    @property
    def useless(self) -> bool:
        return self.terminal and not self.self_fulfilling


@dataclass(frozen=True)
class SCSReport:
    components: tuple[SCSInfo, ...]


def _static_step_ok(pa, pb):
    """Edge conditions 2 and 3 on per-term relation profiles."""
    for a, b in zip(pa, pb):
        if a == EQ and b == LT:
            return False
        if a == GT and b != GT:
            return False
    return True


def strongly_connected(n: int, succ, live=None) -> list[list[int]]:
    """Iterative Tarjan; components come out leaves-first (reverse
    topological order of the condensation)."""
    in_live = [True] * n if live is None else [False] * n
    if live is not None:
        for a in live:
            in_live[a] = True
    UNSEEN = -1
    index = [UNSEEN] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0

    for root in range(n):
        if not in_live[root] or index[root] != UNSEEN:
            continue
        work = [(root, iter(succ[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            node, it = work[-1]
            advanced = False
            for s in it:
                if not in_live[s]:
                    continue
                if index[s] == UNSEEN:
                    index[s] = low[s] = counter
                    counter += 1
                    stack.append(s)
                    on_stack[s] = True
                    work.append((s, iter(succ[s])))
                    advanced = True
                    break
                if on_stack[s]:
                    if index[s] < low[node]:
                        low[node] = index[s]
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                if low[node] < low[parent]:
                    low[parent] = low[node]
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == node:
                        break
                comps.append(sorted(comp))
    return comps


class Tableau:
    """Atom graph for one formula body under one mode."""

    def __init__(self, universe: Universe, mode: Mode):
        self.universe = universe
        self.mode = mode
        self.atoms: list[Atom] = universe.enumerate()
        n = len(self.atoms)
        self._req = []
        self._core = []
        self.static_profiles = []
        for atom in self.atoms:
            m = atom.members
            self._req.append(tuple(nid in m for nid, _ in universe.next_pairs))
            self._core.append(tuple(aid in m for _, aid in universe.next_pairs))
            self.static_profiles.append(universe.static_profile(m))

        # bucket successors by (next-core, static profile); the handful of
        # distinct profiles makes conditions 2-3 a precomputed table lookup
        profiles = sorted(set(self.static_profiles))
        compat = {
            pa: [pb for pb in profiles if _static_step_ok(pa, pb)] for pa in profiles
        }
        buckets: dict[tuple, list[int]] = {}
        for i in range(n):
            buckets.setdefault((self._core[i], self.static_profiles[i]), []).append(i)
        self.succ: list[list[int]] = []
        for i in range(n):
            req = self._req[i]
            out: list[int] = []
            for pb in compat[self.static_profiles[i]]:
                out.extend(buckets.get((req, pb), ()))
            out.sort()
            self.succ.append(out)
        self.edge_count = sum(len(s) for s in self.succ)
        self.initial_ids = tuple(
            a.id for a in self.atoms if universe.is_initial(a.members)
        )

    # -- spec surface -------------------------------------------------------

    def edge(self, a: Atom, b: Atom) -> bool:
        """Direct evaluation of the edge conditions (used by tests)."""
        for nid, aid in self.universe.next_pairs:
            if (nid in a.members) != (aid in b.members):
                return False
        return _static_step_ok(
            self.universe.static_profile(a.members), self.universe.static_profile(b.members)
        )

    def members_of(self, atom_id: int) -> frozenset[int]:
        return self.atoms[atom_id].members

    # -- strongly connected subgraphs ----------------------------------------

    def sccs(self, live=None) -> list[list[int]]:
        """Maximal SCCs of the live subgraph, leaves-first (reverse topological)."""
        return strongly_connected(len(self.atoms), self.succ, live)

    def _self_fulfilling(self, comp, live):
        comp_set = set(comp)
        for a in comp:
            if not any(s in comp_set for s in self.succ[a]):
                return False
        for uid, _lid, rid, _nid in self.universe.untils:
            if any(uid in self.atoms[a].members for a in comp):
                if not any(rid in self.atoms[b].members for b in comp):
                    return False
        return True

    def _terminal(self, comp, live):
        comp_set = set(comp)
        return all(s in comp_set for a in comp for s in self.succ[a] if s in live)

    def scs_decompose(self, live=None) -> SCSReport:
        live = frozenset(range(len(self.atoms))) if live is None else frozenset(live)
        infos = []
        for comp in self.sccs(live):
            infos.append(
                SCSInfo(
                    atom_ids=tuple(comp),
                    terminal=self._terminal(comp, live),
                    self_fulfilling=self._self_fulfilling(comp, live),
                )
            )
        return SCSReport(components=tuple(infos))

    def prune(self, live=None):
        """Remove useless maximal SCSs until none remain.

        Processes the condensation leaves-first: a component stays alive
        iff it is self-fulfilling or can still reach an alive component.
        Returns (alive atom ids, number of removed components).
        """
        live = frozenset(range(len(self.atoms))) if live is None else frozenset(live)
        comps = self.sccs(live)
        comp_of = {}
        for ci, comp in enumerate(comps):
            for a in comp:
                comp_of[a] = ci
        alive = [False] * len(comps)
        removed = 0
        for ci, comp in enumerate(comps):  # successors come first
            if self._self_fulfilling(comp, live):
                alive[ci] = True
                continue
            comp_set = set(comp)
            alive[ci] = any(
                alive[comp_of[s]]
                for a in comp
                for s in self.succ[a]
                if s in live and s not in comp_set
            )
            if not alive[ci]:
                removed += 1
        survivors = frozenset(
            a for ci, comp in enumerate(comps) if alive[ci] for a in comp
        )
        return survivors, removed


@dataclass(frozen=True)
class Stats:
    atom_count: int
    edge_count: int
    survivor_count: int
    pruned_components: int
    closure_size: int
    product_nodes: int = 0


@dataclass
class SatResult:
    satisfiable: bool
    lasso: Lasso | None
    tableau: Tableau
    live: frozenset[int]
    stats: Stats
    formula: Formula
    mode: Mode
    _starts: tuple[int, ...] = field(default=())

    def lasso_candidates(self, limit: int = 64):
        """Fulfilling-lasso candidates, shortest prefixes and anchored
        equality-starts first.  Used for witness extraction with retry."""
        yield from _lasso_candidates(self.tableau, self.live, self._starts, limit)


def _shortest_path(succ, allowed, src, dst, min_len=0):
    """BFS path src -> dst inside ``allowed``; min_len=1 forces >=1 edge."""
    if src == dst and min_len == 0:
        return [src]
    seen = {src}
    queue = deque([[src]])
    while queue:
        path = queue.popleft()
        for s in succ[path[-1]]:
            if s not in allowed:
                continue
            if s == dst:
                return path + [s]
            if s not in seen:
                seen.add(s)
                queue.append(path + [s])
    return None


def _build_cycle(tableau, comp, entry):
    """Cycle through ``comp`` from ``entry`` visiting, for every until
    carried inside the component, an atom holding its right argument."""
    comp_set = set(comp)
    targets = []
    for uid, _lid, rid, _nid in tableau.universe.untils:
        if any(uid in tableau.atoms[a].members for a in comp):
            holders = [b for b in comp if rid in tableau.atoms[b].members]
            if not holders:
                return None
            targets.append(holders)
    path = [entry]
    for holders in targets:
        if any(p in holders for p in path):
            continue
        best = None
        for h in sorted(holders):
            seg = _shortest_path(tableau.succ, comp_set, path[-1], h)
            if seg and (best is None or len(seg) < len(best)):
                best = seg
        if best is None:
            return None
        path.extend(best[1:])
    back = _shortest_path(tableau.succ, comp_set, path[-1], entry, min_len=1)
    if back is None:
        return None
    path.extend(back[1:])
    return tuple(path[:-1])


def _lasso_candidates(tableau, live, starts, limit):
    report = tableau.scs_decompose(live)
    sf_comps = [c for c in report.components if c.self_fulfilling]
    # terminal components first, then by smallest member id
    sf_comps.sort(key=lambda c: (not c.terminal, c.atom_ids[0]))
    seen = set()
    count = 0
    for start in starts:
        for comp in sf_comps:
            comp_ids = set(comp.atom_ids)
            # nearest entry reachable from this start
            dist = {start: [start]}
            queue = deque([start])
            entry_path = None
            while queue:
                node = queue.popleft()
                if node in comp_ids:
                    entry_path = dist[node]
                    break
                for s in tableau.succ[node]:
                    if s in live and s not in dist:
                        dist[s] = dist[node] + [s]
                        queue.append(s)
            if entry_path is None:
                continue
            cycle = _build_cycle(tableau, list(comp.atom_ids), entry_path[-1])
            if cycle is None:
                continue
            lasso = Lasso(prefix=tuple(entry_path[:-1]), cycle=cycle)
            if lasso in seen:
                continue
            seen.add(lasso)
            yield lasso
            count += 1
            if count >= limit:
                return


def _eligible_starts(tableau, live, phi_id):
    """Surviving atoms a fulfilling path may start at, deterministic order:
    zero-anchored equality atoms first (matching runs that begin with a
    timeout event at time zero), then zero-anchored x<y atoms."""
    uni = tableau.universe
    out = []
    for a in sorted(live):
        members = tableau.atoms[a].members
        if phi_id not in members:
            continue
        if tableau.mode is Mode.START_INITIAL:
            if uni.is_initial_eq(members):
                out.append((0, a))
            elif uni.is_initial_lt(members):
                out.append((1, a))
        else:
            out.append((0, a))
    return tuple(a for _, a in sorted(out))


def check_sat(body: Formula, mode: Mode = Mode.START_INITIAL) -> SatResult:
    """Tableau satisfiability of an unquantified formula."""
    universe = build_universe(body, initial_mode=(mode is Mode.START_INITIAL))
    tableau = Tableau(universe, mode)
    live, removed = tableau.prune()
    phi_id = universe.index[body]
    starts = _eligible_starts(tableau, live, phi_id)
    lasso = None
    for cand in _lasso_candidates(tableau, live, starts, limit=1):
        lasso = cand
        break
    stats = Stats(
        atom_count=len(tableau.atoms),
        edge_count=tableau.edge_count,
        survivor_count=len(live),
        pruned_components=removed,
        closure_size=len(universe.formulas),
    )
    return SatResult(
        satisfiable=lasso is not None,
        lasso=lasso,
        tableau=tableau,
        live=live,
        stats=stats,
        formula=body,
        mode=mode,
        _starts=starts,
    )


@dataclass
class ValidResult:
    valid: bool
    counter: SatResult | None

    @property
    def stats(self):
        return None if self.counter is None else self.counter.stats


def check_valid(qf: QuantifiedFormula, mode: Mode = Mode.START_INITIAL) -> ValidResult:
    """Validity via satisfiability of the negation."""
    counter = check_sat(negate(qf.body), mode)
    if counter.satisfiable:
        return ValidResult(valid=False, counter=counter)
    return ValidResult(valid=True, counter=None)


def to_dot(result: SatResult) -> str:
    """DOT dump: surviving atoms solid, pruned atoms and edges dashed."""
    tableau, live = result.tableau, result.live
    uni = tableau.universe
    lines = ["digraph tableau {", "  node [shape=box, fontsize=9];"]
    for atom in tableau.atoms:
        label = "\\n".join(str(uni.formula(i)) for i in sorted(atom.members))
        style = "solid" if atom.id in live else "dashed"
        shape = ', peripheries=2' if atom.id in tableau.initial_ids else ""
        lines.append(f'  a{atom.id} [label="{label}", style={style}{shape}];')
    for a in range(len(tableau.atoms)):
        for b in tableau.succ[a]:
            style = "solid" if a in live and b in live else "dashed"
            lines.append(f"  a{a} -> a{b} [style={style}];")
    lines.append("}")
    return "\n".join(lines)
