"""Product of a specification tableau with a timeout Kripke structure.

Model checking negates the specification body, builds its tableau, and
crosses the surviving atoms with the structure's locations.  Delay edges
pair tableau edges with the structure's delay transitions and force the
clock's static picture to progress; discrete edges pair tableau edges
with timeout-raising transitions and freeze the static picture.  The
specification fails exactly when the pruned product contains a fulfilling
lasso (with at least one delay edge in its cycle, so time advances) that
can be replayed into a concrete integer computation of the structure.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from itertools import product as iproduct

from .syntax import EQ, GT, LT, QuantifiedFormula, StaticConstraint, negate, subformulas
from .tableau import Mode, SatResult, Stats, check_sat, strongly_connected
from .tks import STAR, TimeoutKripkeStructure, UnknownVariable, max_path_delay
from .witness import TimedState, TimedWitness

DELAY = "delay"
DISCRETE = "discrete"


@dataclass(frozen=True)
class ProductLasso:
    """Node path plus the transition taken at every step (seam included)."""

    prefix: tuple[int, ...]
    cycle: tuple[int, ...]
    steps: tuple  # (kind, edge) per transition along prefix+cycle+seam

    def nodes(self):
        return self.prefix + self.cycle


class ProductGraph:
    """Cross product restricted to proposition-consistent pairs."""

    def __init__(self, sat_result: SatResult, k: TimeoutKripkeStructure):
        self.tableau = sat_result.tableau
        self.k = k
        uni = self.tableau.universe
        vocab = set(uni.prop_names)
        live = sorted(sat_result.live)

        self.nodes: list[tuple[int, str]] = []
        self.node_index: dict[tuple[int, str], int] = {}
        for a in live:
            atom_props = uni.props_of(self.tableau.atoms[a].members)
            for loc in k.locations:
                if frozenset(loc.props & vocab) == atom_props:
                    self.node_index[(a, loc.id)] = len(self.nodes)
                    self.nodes.append((a, loc.id))

        live_set = set(live)
        profiles = self.tableau.static_profiles
        n = len(self.nodes)
        self.out: list[list[tuple[int, str, object]]] = [[] for _ in range(n)]
        by_loc: dict[str, list[int]] = {}
        for idx, (a, loc_id) in enumerate(self.nodes):
            by_loc.setdefault(loc_id, []).append(idx)
        for idx, (a, loc_id) in enumerate(self.nodes):
            pa = profiles[a]
            succ_atoms = [b for b in self.tableau.succ[a] if b in live_set]
            for edge in k.delay_from(loc_id):
                for b in succ_atoms:
                    if not _delay_progress(pa, profiles[b]):
                        continue
                    j = self.node_index.get((b, edge.dst))
                    if j is not None:
                        self.out[idx].append((j, DELAY, edge))
            for edge in k.discrete_from(loc_id):
                for b in succ_atoms:
                    if profiles[b] != pa:  # statics are frozen on discrete steps
                        continue
                    j = self.node_index.get((b, edge.dst))
                    if j is not None:
                        self.out[idx].append((j, DISCRETE, edge))
        self.succ = [[j for j, _, _ in row] for row in self.out]
        self.edge_count = sum(len(row) for row in self.out)

        phi_id = uni.index[sat_result.formula]
        init_locs = set(k.initial_ids)
        self.initial_nodes = tuple(
            idx
            for idx, (a, loc_id) in enumerate(self.nodes)
            if loc_id in init_locs
            and phi_id in self.tableau.atoms[a].members
            and (
                sat_result.mode is not Mode.START_INITIAL
                or uni.is_initial(self.tableau.atoms[a].members)
            )
        )

    def atom_members(self, idx):
        return self.tableau.atoms[self.nodes[idx][0]].members

    # -- pruning ----------------------------------------------------------

    def _self_fulfilling(self, comp):
        comp_set = set(comp)
        for v in comp:
            if not any(j in comp_set for j in self.succ[v]):
                return False
        for uid, _lid, rid, _nid in self.tableau.universe.untils:
            if any(uid in self.atom_members(v) for v in comp):
                if not any(rid in self.atom_members(v) for v in comp):
                    return False
        # fairness: time must advance somewhere inside the component
        return any(
            kind == DELAY and j in comp_set for v in comp for j, kind, _ in self.out[v]
        )

    def prune(self):
        comps = strongly_connected(len(self.nodes), self.succ)
        comp_of = {}
        for ci, comp in enumerate(comps):
            for v in comp:
                comp_of[v] = ci
        alive = [False] * len(comps)
        for ci, comp in enumerate(comps):
            if self._self_fulfilling(comp):
                alive[ci] = True
                continue
            comp_set = set(comp)
            alive[ci] = any(
                alive[comp_of[j]] for v in comp for j in self.succ[v] if j not in comp_set
            )
        survivors = frozenset(v for ci, comp in enumerate(comps) if alive[ci] for v in comp)
        return survivors, comps, alive


def _delay_progress(pa, pb):
    """Static picture across a delay step: < may move to = or >, = must
    move to >, and > persists (already forced by the tableau edge)."""
    for a, b in zip(pa, pb):
        if a == LT and b == LT:
            return False
        if a == EQ and b != GT:
            return False
    return True


@dataclass
class McResult:
    holds: bool
    witness: TimedWitness | None
    lasso: ProductLasso | None
    warning: str | None
    sat_result: SatResult
    stats: Stats

    @property
    def concretization_failed(self) -> bool:
        return not self.holds and self.witness is None


def _bfs_path(graph: ProductGraph, sources, goal_set, allowed):
    seen = {s: None for s in sources}
    queue = deque(sources)
    while queue:
        v = queue.popleft()
        if v in goal_set:
            path = [v]
            while seen[path[-1]] is not None:
                path.append(seen[path[-1]][0])
            return list(reversed(path))
        for j, kind, edge in graph.out[v]:
            if j in allowed and j not in seen:
                seen[j] = (v, kind, edge)
                queue.append(j)
    return None


def _step_annotations(graph: ProductGraph, prefix, cycle):
    """Pick, for each consecutive node pair (seam included), a transition."""
    seq = list(prefix) + list(cycle)
    pairs = list(zip(seq, seq[1:])) + [(cycle[-1], cycle[0])]
    steps = []
    for a, b in pairs:
        options = [(kind, edge) for j, kind, edge in graph.out[a] if j == b]
        if not options:
            return None
        options.sort(key=str)
        steps.append(options[0])
    return steps


def _product_lassos(graph: ProductGraph, survivors, comps, alive, limit):
    sf = [
        comp
        for ci, comp in enumerate(comps)
        if alive[ci] and graph._self_fulfilling(comp)
    ]
    sf.sort(key=lambda comp: comp[0])
    count = 0
    for start in graph.initial_nodes:
        if start not in survivors:
            continue
        for comp in sf:
            comp_set = set(comp)
            prefix = _bfs_path(graph, [start], comp_set, survivors)
            if prefix is None:
                continue
            entry = prefix[-1]
            cycle = _cycle_through(graph, comp, entry)
            if cycle is None:
                continue
            steps = _step_annotations(graph, prefix[:-1], cycle)
            if steps is None:
                continue
            yield ProductLasso(tuple(prefix[:-1]), tuple(cycle), tuple(steps))
            count += 1
            if count >= limit:
                return


def _cycle_through(graph: ProductGraph, comp, entry):
    """Cycle inside the component from ``entry`` that fulfils every until
    carried in the component and crosses at least one delay edge."""
    comp_set = set(comp)
    uni = graph.tableau.universe
    targets = []
    for uid, _lid, rid, _nid in uni.untils:
        if any(uid in graph.atom_members(v) for v in comp):
            holders = {v for v in comp if rid in graph.atom_members(v)}
            if not holders:
                return None
            targets.append(holders)
    path = [entry]
    used_delay = False

    def extend_to(goal_set):
        nonlocal used_delay
        seg = _segment(graph, comp_set, path[-1], goal_set)
        if seg is None:
            return False
        for (kind, _e), node in seg:
            if kind == DELAY:
                used_delay = True
            path.append(node)
        return True

    for holders in targets:
        if any(p in holders for p in path):
            continue
        if not extend_to(holders):
            return None
    if not used_delay:
        delay_sources = {
            v
            for v in comp
            if any(kind == DELAY and j in comp_set for j, kind, _ in graph.out[v])
        }
        if not delay_sources:
            return None
        if path[-1] not in delay_sources and not extend_to(delay_sources):
            return None
        v = path[-1]
        j, kind, edge = min(
            ((j, kind, e) for j, kind, e in graph.out[v] if kind == DELAY and j in comp_set),
            key=lambda t: t[0],
        )
        path.append(j)
    # close the loop with at least one transition
    seg = _segment(graph, comp_set, path[-1], {entry}, min_len=1)
    if seg is None:
        return None
    for _step, node in seg:
        path.append(node)
    return tuple(path[:-1])


def _segment(graph: ProductGraph, allowed, src, goal_set, min_len=0):
    """Shortest labelled path src -> goal inside ``allowed``; returns a list
    of ((kind, edge), node) pairs excluding the source."""
    if src in goal_set and min_len == 0:
        return []
    seen = {src}
    queue = deque([(src, [])])
    while queue:
        v, trail = queue.popleft()
        for j, kind, edge in graph.out[v]:
            if j not in allowed:
                continue
            step = ((kind, edge), j)
            if j in goal_set:
                return trail + [step]
            if j not in seen:
                seen.add(j)
                queue.append((j, trail + [step]))
    return None


# --- concretisation -------------------------------------------------------------


STAR_SLACK = 4  # extra raise amounts tried above l on open-ended ranges


def _atom_ok(uni, members, x, y, timing):
    dyn = uni.dynamic_of(members)
    if dyn == EQ and x != y:
        return False
    if dyn == LT and not x < y:
        return False
    for term, rel in zip(uni.terms, uni.static_profile(members)):
        if term.var is None:
            rhs = term.const
        else:
            rhs = timing[term.var] + term.const
        if rel == LT and not x < rhs:
            return False
        if rel == EQ and x != rhs:
            return False
        if rel == GT and not x > rhs:
            return False
    return True


def _replay_cycles(graph, lasso, timing, x, touts, deltas, turns):
    """Replay ``turns`` further cycle traversals with fixed choices; returns
    per-position (x, timeouts) values or None when a step becomes illegal."""
    uni = graph.tableau.universe
    nodes = list(lasso.nodes())
    P, C = len(lasso.prefix), len(lasso.cycle)
    touts = list(touts)
    out = []
    for _turn in range(turns):
        for i in range(P, P + C):
            y = min(touts)
            if not _atom_ok(uni, graph.atom_members(nodes[i]), x, y, timing):
                return None
            out.append((x, tuple(touts)))
            kind, _edge = lasso.steps[i]
            if kind == DELAY:
                if not x < y:
                    return None
                x = y
            else:
                if x != y:
                    return None
                j, delta = deltas[i]
                if touts[j] != y:
                    return None
                touts[j] += delta
    return out


def _concretise(graph: ProductGraph, lasso: ProductLasso, timing, bound):
    """Search initial timeouts and per-step raise choices realising the
    lasso as an integer computation that stays legal on every cycle turn.

    The first traversal is explored by depth-first search with early
    rejection; the fixed choices are then replayed for two further turns
    and the per-position shifts must be constant and nonnegative (all the
    step and constraint conditions are affine per cycle turn, so equality
    conditions verified on two turns and inequalities with nonnegative
    drift hold on every turn; clock-bounding constraints additionally
    require zero clock drift)."""
    uni = graph.tableau.universe
    k = graph.k
    n = k.timeout_count
    P, C = len(lasso.prefix), len(lasso.cycle)
    nodes = list(lasso.nodes())
    first_dyn = uni.dynamic_of(graph.atom_members(nodes[0]))

    def step_choices(i, y, touts):
        kind, edge = lasso.steps[i]
        if kind == DELAY:
            return [None]
        hi = edge.lo + STAR_SLACK if edge.hi is STAR else edge.hi
        minimal = [j for j, t in enumerate(touts) if t == y]
        return [(j, d) for j in minimal for d in range(edge.lo, hi + 1)]

    def finish(x, touts, deltas):
        tail = _replay_cycles(graph, lasso, timing, x, touts, deltas, turns=2)
        if tail is None:
            return None
        head = first_pass_values[P:]

        def vec(rec):
            vx, ts = rec
            return (vx, min(ts), *ts)

        base = [vec(head[i]) for i in range(C)]
        once = [vec(tail[i]) for i in range(C)]
        twice = [vec(tail[C + i]) for i in range(C)]
        slopes = []
        for b, o, t in zip(base, once, twice):
            s = tuple(oo - bb for bb, oo in zip(b, o))
            if tuple(tt - oo for oo, tt in zip(o, t)) != s:
                return None
            if any(v < 0 for v in s):
                return None
            slopes.append(s)
        if all(s[0] == 0 for s in slopes):
            return None  # the clock must diverge
        # inequality conditions that an upward drift would eventually break
        for i in range(C):
            members = graph.atom_members(nodes[P + i])
            sx, sy = slopes[i][0], slopes[i][1]
            if uni.dynamic_of(members) == LT and sy < sx:
                return None
            for term, rel in zip(uni.terms, uni.static_profile(members)):
                if rel != GT and sx != 0:
                    return None
        return slopes

    first_pass_values = []
    result = {}

    def dfs(i, x, touts, deltas):
        if i == P + C:
            slopes = finish(x, touts, deltas)
            if slopes is None:
                return False
            result["slopes"] = slopes
            result["deltas"] = dict(deltas)
            return True
        y = min(touts)
        if not _atom_ok(uni, graph.atom_members(nodes[i]), x, y, timing):
            return False
        first_pass_values.append((x, tuple(touts)))
        kind, _edge = lasso.steps[i]
        ok = False
        if kind == DELAY:
            if x < y:
                ok = dfs(i + 1, y, touts, deltas)
        else:
            if x == y:
                for j, d in step_choices(i, y, touts):
                    nxt = list(touts)
                    nxt[j] += d
                    deltas[i] = (j, d)
                    if dfs(i + 1, x, tuple(nxt), deltas):
                        ok = True
                        break
                    del deltas[i]
        if not ok:
            first_pass_values.pop()
        return ok

    for t0 in iproduct(range(0, bound + 1), repeat=n):
        m0 = min(t0)
        if first_dyn == EQ and m0 != 0:
            continue
        if first_dyn == LT and m0 == 0:
            continue
        first_pass_values.clear()
        result.clear()
        if dfs(0, 0, t0, {}):
            return list(first_pass_values), result["slopes"], result["deltas"]
    return None


def _witness_from_replay(graph: ProductGraph, lasso: ProductLasso, timing, values, slopes, deltas):
    uni = graph.tableau.universe
    k = graph.k
    P, C = len(lasso.prefix), len(lasso.cycle)
    nodes = list(lasso.nodes())
    by_id = {loc.id: loc for loc in k.locations}

    def state(i, inc=(0, 0)):
        atom_id, loc_id = graph.nodes[nodes[i]]
        x, touts = values[i]
        return TimedState(
            atom_id=atom_id,
            x=Fraction(x),
            y=Fraction(min(touts)),
            props=frozenset(by_id[loc_id].props),
            location=loc_id,
            x_inc=Fraction(inc[0]),
            y_inc=Fraction(inc[1]),
        )

    prefix = tuple(state(i) for i in range(P))
    cycle = tuple(
        state(P + i, inc=(slopes[i][0], slopes[i][1])) for i in range(C)
    )
    notes = []
    for i, (kind, edge) in enumerate(lasso.steps):
        where = "cycle" if i >= P else "prefix"
        if kind == DELAY:
            notes.append(f"{where} step {i}: delay {edge.src} -> {edge.dst}")
        else:
            j, d = deltas[i]
            hi = "*" if edge.hi is STAR else edge.hi
            notes.append(
                f"{where} step {i}: discrete {edge.src} -[{edge.lo},{hi}]-> {edge.dst},"
                f" raise timeout {j + 1} by {d}"
            )
    timing_fr = {v: Fraction(val) for v, val in timing.items()}
    return TimedWitness(prefix=prefix, cycle=tuple(cycle), timing=timing_fr, notes=tuple(notes))


def build_product(sat_result: SatResult, k: TimeoutKripkeStructure) -> ProductGraph:
    """Spec surface: the raw product graph for a negated-body tableau."""
    return ProductGraph(sat_result, k)


def model_check(
    k: TimeoutKripkeStructure,
    spec: QuantifiedFormula,
    bound: int | None = None,
    lasso_limit: int = 40,
) -> McResult:
    """Does every computation of ``k`` satisfy ``spec``?"""
    body = spec.body
    for init in k.initial_ids:
        valuation = k.location(init).static_valuation
        missing = [t for t in spec.bound_vars if t not in valuation]
        if missing:
            raise UnknownVariable(
                f"initial location {init} gives no value for {', '.join(missing)}"
            )
    sat_result = check_sat(negate(body), Mode.START_INITIAL)
    graph = ProductGraph(sat_result, k)
    stats = Stats(
        atom_count=sat_result.stats.atom_count,
        edge_count=sat_result.stats.edge_count,
        survivor_count=sat_result.stats.survivor_count,
        pruned_components=sat_result.stats.pruned_components,
        closure_size=sat_result.stats.closure_size,
        product_nodes=len(graph.nodes),
    )
    if not sat_result.satisfiable:
        return McResult(True, None, None, None, sat_result, stats)
    survivors, comps, alive = graph.prune()
    if not any(v in survivors for v in graph.initial_nodes):
        return McResult(True, None, None, None, sat_result, stats)

    if bound is None:
        consts = [
            g.term.const
            for g in subformulas(body)
            if isinstance(g, StaticConstraint)
        ]
        valuations = [
            v for loc in k.locations for v in loc.static_valuation.values()
        ]
        # acyclic path delay undershoots on cyclic models, so single-edge
        # increments also feed the initial-timeout search window
        increments = [e.lo if e.hi is STAR else e.hi for e in k.discrete_edges]
        bound = max([max_path_delay(k), *consts, *valuations, *increments, 1])

    first_lasso = None
    for lasso in _product_lassos(graph, survivors, comps, alive, lasso_limit):
        if first_lasso is None:
            first_lasso = lasso
        first_loc = graph.nodes[lasso.nodes()[0]][1]
        timing = dict(k.location(first_loc).static_valuation)
        got = _concretise(graph, lasso, timing, bound)
        if got:
            values, slopes, deltas = got
            witness = _witness_from_replay(graph, lasso, timing, values, slopes, deltas)
            return McResult(False, witness, lasso, None, sat_result, stats)
    warning = (
        "no integer raise assignment within bounds realises the symbolic lasso"
        if first_lasso is not None
        else "fulfilling product lasso exists but no cycle could be constructed"
    )
    return McResult(False, None, first_lasso, warning, sat_result, stats)
