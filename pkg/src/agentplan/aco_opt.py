"""Ant-colony optimization of agent decisions.

Each node agent picks a machine and a forecast delay (how many slots past
its earliest free start it waits). Choices are sampled in proportion to
pheromone^alpha * heuristic^beta; good plans reinforce the decisions they
used. Step orders inside order groups are searched exhaustively first.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .csp_agents import (
    ConstraintNetwork,
    NodeId,
    NodeState,
    PrimaryAlgorithm,
    solve_csp,
)
from .errors import GroupTooLarge, Infeasible
from .model import (
    MinCostAtLength,
    MinMakespan,
    Objective,
    Plan,
    ProblemInstance,
    WorkpieceType,
    makespan_lower_bound,
    min_jumps,
    placement_key,
    suffix_jump_table,
)

MAX_GROUP = 8


@dataclass(frozen=True, order=True)
class DecisionKey:
    node: NodeId
    machine: int
    delay: int


@dataclass(frozen=True, order=True)
class OrderKey:
    index: int


@dataclass(frozen=True)
class AcoParams:
    alpha: float = 1.0
    beta: float = 2.0
    rho: float = 0.1
    Q: Optional[float] = None      # None: objective value of the first greedy plan
    ants: int = 20
    iterations: int = 200
    forecast: int = 0
    pool_size: int = 10
    seed: int = 0
    tau0: float = 1.0
    tau_min: float = 0.01
    pool_bias: float = 0.0         # optional heuristic bonus for the pool-best decision
    order_pool: int = 3            # group orders kept for the ant phase
    max_orders: int = 2880

    def __post_init__(self):
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.forecast < 0:
            raise ValueError("forecast depth must be >= 0")
        if self.ants < 1 or self.iterations < 0 or self.pool_size < 1:
            raise ValueError("need ants >= 1, iterations >= 0, pool_size >= 1")
        if not 0 < self.tau_min <= self.tau0:
            raise ValueError("need 0 < tau_min <= tau0")


# ---------------------------------------------------------------- group orders

def enumerate_group_orders(wtype: WorkpieceType, max_group: int = MAX_GROUP) -> list[tuple[int, ...]]:
    """Every step sequence that keeps the group order; listed order first."""
    groups = wtype.groups()
    for g in groups:
        if len(g) > max_group:
            raise GroupTooLarge(f"type {wtype.type_id}: group {g[0].order_group} has {len(g)} steps")
    per_group = [list(itertools.permutations([s.step_id for s in g])) for g in groups]
    seen = set()
    out = []
    for combo in itertools.product(*per_group):
        order = tuple(itertools.chain.from_iterable(combo))
        if order not in seen:
            seen.add(order)
            out.append(order)
    return out


def order_combinations(instance: ProblemInstance, limit: int, rng: np.random.Generator,
                       jump_budget: Optional[int] = None) -> list[dict[str, tuple[int, ...]]]:
    """Per-type order choices; exhaustive up to ``limit``, otherwise a seeded sample."""
    type_ids = sorted({p.type_id for p in instance.pieces})
    options = []
    for t in type_ids:
        orders = enumerate_group_orders(instance.types[t])
        if jump_budget is not None:
            orders = [o for o in orders if min_jumps(instance.types[t], o) <= jump_budget]
        options.append(orders)
    if any(not o for o in options):
        return []
    total = math.prod(len(o) for o in options)
    if total <= limit:
        return [dict(zip(type_ids, c)) for c in itertools.product(*options)]
    picked = {tuple(0 for _ in options)}
    while len(picked) < limit:
        picked.add(tuple(int(rng.integers(len(o))) for o in options))
    return [dict(zip(type_ids, (options[k][i] for k, i in enumerate(idx)))) for idx in sorted(picked)]


# ---------------------------------------------------------------- pheromone

class PheromoneStore:
    """Pheromone per decision; keys never deposited on read the shared default."""

    def __init__(self, tau0: float = 1.0, tau_min: float = 0.01):
        self.tau_min = tau_min
        self.default = tau0
        self.values: dict = {}

    def get(self, key) -> float:
        return self.values.get(key, self.default)

    def __getitem__(self, key) -> float:
        return self.get(key)

    def __setitem__(self, key, value: float) -> None:
        self.values[key] = value

    def evaporate(self, rho: float) -> None:
        keep = 1.0 - rho
        self.default = max(self.tau_min, keep * self.default)
        for k, v in self.values.items():
            self.values[k] = max(self.tau_min, keep * v)

    def minimum(self) -> float:
        return min([self.default, *self.values.values()])

    def maximum(self) -> float:
        return max([self.default, *self.values.values()])


def decision_probabilities(candidates: Sequence, store: PheromoneStore, params: AcoParams,
                           heuristic: Callable[[object], float]) -> list[float]:
    weights = [store.get(c) ** params.alpha * heuristic(c) ** params.beta for c in candidates]
    total = math.fsum(weights)
    if not total > 0:
        return [1.0 / len(candidates)] * len(candidates)
    return [w / total for w in weights]


def _sample(probs: Sequence[float], rng: np.random.Generator) -> int:
    u = rng.random()
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i
    return len(probs) - 1


@dataclass
class PoolEntry:
    value: object
    plan: Plan
    keys: frozenset = frozenset()
    order: Optional[int] = None

    _rank: Optional[tuple] = field(default=None, init=False, repr=False, compare=False)

    def rank(self):
        if self._rank is None:
            self._rank = (self.value, self.plan.makespan, self.plan.cost, self.plan.jumps,
                          tuple(placement_key(p) + (p.finish,) for p in self.plan.placements))
        return self._rank


class OptimizationPool:
    """The best ``size`` distinct plans seen so far, best first."""

    def __init__(self, size: int):
        self.size = size
        self.entries: list[PoolEntry] = []

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def best(self) -> Optional[PoolEntry]:
        return self.entries[0] if self.entries else None

    def add(self, entry: PoolEntry) -> bool:
        if len(self.entries) >= self.size and entry.rank() >= self.entries[-1].rank():
            return False
        placements = entry.plan.placements  # canonically sorted
        for e in self.entries:
            if e.plan.placements == placements:
                return False
        self.entries.append(entry)
        self.entries.sort(key=PoolEntry.rank)
        del self.entries[self.size:]
        return entry in self.entries

    def plans(self) -> list[Plan]:
        return [e.plan for e in self.entries]


def evaporate_and_deposit(store: PheromoneStore, pool: OptimizationPool,
                          iteration_best: Optional[PoolEntry], params: AcoParams,
                          q: float) -> PheromoneStore:
    """Evaporate everything, then reinforce the iteration-best and pool-best decisions.

    A decision used by both plans is reinforced once, with the larger deposit.
    """
    store.evaporate(params.rho)
    deposits: dict = {}
    for entry in (iteration_best, pool.best):
        if entry is None:
            continue
        value = float(entry.value)
        amount = q / value if value > 0 else q
        for k in entry.keys:
            deposits[k] = max(deposits.get(k, 0.0), amount)
    for k, amount in deposits.items():
        store[k] = store.get(k) + amount
    return store


# ---------------------------------------------------------------- construction

class AntChooser:
    """Samples (machine, delay) per node; falls back to the greedy scan."""

    def __init__(self, store: PheromoneStore, params: AcoParams, rng: Optional[np.random.Generator],
                 forecast: int = 0, first_only: Optional[int] = None,
                 jump_budget: Optional[int] = None, hint: Optional[Mapping[NodeId, tuple[int, int]]] = None,
                 greedy: bool = False):
        self.store = store
        self.params = params
        self.rng = rng
        self.forecast = forecast
        self.first_only = first_only
        self.jump_budget = jump_budget
        self.hint = hint or {}
        self.greedy = greedy
        self._tables: dict = {}

    def depth(self, node: NodeState) -> int:
        if self.first_only is not None and node.id.piece_id != self.first_only:
            return 0
        return self.forecast

    def _allowed(self, net: ConstraintNetwork, node: NodeState) -> list[int]:
        caps = list(node.spec.capable())
        if self.jump_budget is None:
            return caps
        key = (node.type_id, net.orders[node.type_id])
        table = self._tables.get(key)
        if table is None:
            table = self._tables[key] = suffix_jump_table(net.instance.types[node.type_id], key[1])
        used, prev = 0, None
        cur = net.chains[node.id.piece_id][0]
        while cur != node.id:
            m = net.nodes[cur].placement.machine
            if prev is not None and m != prev:
                used += 1
            prev = m
            cur = net.nodes[cur].successor
        return [m for m in caps
                if used + (prev is not None and m != prev) + table[node.position][m] <= self.jump_budget]

    def candidates(self, net: ConstraintNetwork, node: NodeState, lower: int):
        allowed = self._allowed(net, node)
        if self.greedy or not allowed:
            yield from net.scan(node, lower, allowed)
            return
        depth = self.depth(node)
        horizon = net.horizon
        prev_machine = None
        if node.predecessor is not None:
            prev = net.nodes[node.predecessor].placement
            prev_machine = prev.machine if prev is not None else None
        options: list[tuple[int, int, int]] = []
        for m in allowed:
            d = node.spec.durations[m]
            cal = net.calendars[m]
            earliest = None
            for s in range(lower, horizon - d + 1):
                if cal.is_free(s, s + d):
                    earliest = s
                    break
            if earliest is None:
                continue
            for delay in range(depth + 1):
                s = earliest + delay
                if s + d <= horizon and cal.is_free(s, s + d):
                    options.append((s, m, delay))
        if not options:
            return
        keys = [DecisionKey(node.id, m, delay) for _, m, delay in options]
        hinted = self.hint.get(node.id)

        def eta(k: DecisionKey) -> float:
            jump = 1 if prev_machine is not None and k.machine != prev_machine else 0
            h = 1.0 / (1 + k.delay + jump)
            if hinted is not None and (k.machine, k.delay) == hinted:
                h *= 1.0 + self.params.pool_bias
            return h

        probs = decision_probabilities(keys, self.store, self.params, eta)
        pick = options[_sample(probs, self.rng)]
        yield pick
        tried = {pick[:2]}
        # on backtracking, the pool-best decision for this node goes first
        for s, m, delay in options:
            free = net.calendars[m].is_free(s, s + node.spec.durations[m])
            if hinted == (m, delay) and (s, m) not in tried and free:
                tried.add((s, m))
                yield (s, m, delay)
        for s, m, delay in net.scan(node, lower, allowed):
            if (s, m) not in tried:
                yield (s, m, delay)


@dataclass
class Construction:
    plan: Plan
    keys: frozenset
    network: ConstraintNetwork


def _construct(instance: ProblemInstance, orders, chooser: AntChooser) -> Construction:
    algo = PrimaryAlgorithm(instance, orders=orders, chooser=chooser)
    plan = algo.solve()
    net = algo.network
    keys = []
    for nid, node in net.nodes.items():
        if node.placement is not None and node.delay <= chooser.depth(node):
            keys.append(DecisionKey(nid, node.placement.machine, node.delay))
    return Construction(plan, frozenset(keys), net)


def _first_piece(instance: ProblemInstance) -> Optional[int]:
    if not instance.pieces:
        return None
    return min(instance.pieces, key=lambda p: (p.priority, p.piece_id)).piece_id


def construct_solution(instance: ProblemInstance, orders: Optional[Mapping[str, Sequence[int]]],
                       store: PheromoneStore, params: AcoParams, rng: Optional[np.random.Generator],
                       *, forecast_first_only: bool = False, jump_budget: Optional[int] = None,
                       hint=None, greedy: bool = False) -> Plan:
    """One ant's plan: chain propagation with sampled machine/delay decisions."""
    chooser = AntChooser(store, params, rng, params.forecast,
                         _first_piece(instance) if forecast_first_only else None,
                         jump_budget, hint, greedy)
    return _construct(instance, orders, chooser).plan


# ---------------------------------------------------------------- optimizer

@dataclass
class AcoResult:
    best: Plan
    pool: OptimizationPool
    history: list
    orders: dict = field(default_factory=dict)
    store: Optional[PheromoneStore] = None
    max_tau_seen: float = 0.0
    min_tau_seen: float = math.inf


def aco_optimize(instance: ProblemInstance, objective: Optional[Objective] = None,
                 params: Optional[AcoParams] = None, *, jump_budget: Optional[int] = None,
                 forecast_first_only: bool = False, initial_plans: Iterable[Plan] = (),
                 order_cache: Optional[dict] = None) -> AcoResult:
    """Search orders exhaustively, then refine decisions with the ant colony.

    ``jump_budget`` caps the jumps of every single piece. ``initial_plans``
    enter the pool before the first iteration. The loop stops early once the
    best makespan reaches the instance lower bound, which no plan can beat.
    """
    objective = objective or MinMakespan()
    params = params or AcoParams()
    greedy = solve_csp(instance, seed=params.seed)

    def admissible(plan: Plan) -> bool:
        if not objective.admits(plan):
            return False
        return jump_budget is None or plan.max_piece_jumps() <= jump_budget

    pool = OptimizationPool(params.pool_size)
    if params.iterations == 0:
        if not admissible(greedy):
            raise Infeasible("greedy plan violates the objective's constraints")
        pool.add(PoolEntry(objective.value(greedy), greedy))
        return AcoResult(greedy, pool, [])

    if isinstance(objective, MinCostAtLength) and objective.length < makespan_lower_bound(instance):
        raise Infeasible(f"length {objective.length} is below the lower bound")
    if jump_budget is not None:
        for t in {p.type_id for p in instance.pieces}:
            if min_jumps(instance.types[t]) > jump_budget:
                raise Infeasible(f"type {t} needs more than {jump_budget} jumps")

    for plan in (greedy, *initial_plans):
        if admissible(plan):
            pool.add(PoolEntry(objective.value(plan), plan))

    rng = np.random.default_rng([params.seed, 0xC0DE])
    combos = order_combinations(instance, params.max_orders, rng, jump_budget)
    if not combos:
        raise Infeasible("no step order fits the jump budget")
    cache = order_cache if order_cache is not None else {}

    ranked = []
    for idx, combo in enumerate(combos):
        key = tuple(sorted(combo.items()))
        plan = cache.get(key)
        if plan is None:
            plan = cache[key] = PrimaryAlgorithm(instance, orders=combo).solve()
        ok = admissible(plan)
        if ok:
            pool.add(PoolEntry(objective.value(plan), plan))
        ranked.append(((0 if ok else 1, objective.value(plan), plan.makespan, idx), combo))
    ranked.sort(key=lambda r: r[0])
    top = [combo for _, combo in ranked[:params.order_pool]]

    q = params.Q if params.Q is not None else float(objective.value(greedy)) or 1.0
    store = PheromoneStore(params.tau0, params.tau_min)
    first = _first_piece(instance) if forecast_first_only else None
    lower = makespan_lower_bound(instance) if isinstance(objective, MinMakespan) else None
    order_keys = [OrderKey(i) for i in range(len(top))]
    history = []
    result = AcoResult(greedy, pool, history, store=store)

    for it in range(params.iterations):
        best_pool = pool.best
        hint = _decisions(best_pool) if best_pool is not None else None
        iteration_best: Optional[PoolEntry] = None
        for ant in range(params.ants):
            ant_rng = np.random.default_rng([params.seed, it, ant])
            probs = decision_probabilities(order_keys, store, params, lambda k: 1.0)
            oi = _sample(probs, ant_rng)
            chooser = AntChooser(store, params, ant_rng, params.forecast, first, jump_budget, hint)
            built = _construct(instance, top[oi], chooser)
            if not admissible(built.plan):
                continue
            entry = PoolEntry(objective.value(built.plan), built.plan,
                              built.keys | {order_keys[oi]}, oi)
            if iteration_best is None or entry.rank() < iteration_best.rank():
                iteration_best = entry
        if iteration_best is not None:
            pool.add(iteration_best)
        if pool.best is None:
            history.append(None)
            continue
        evaporate_and_deposit(store, pool, iteration_best, params, q)
        result.max_tau_seen = max(result.max_tau_seen, store.maximum())
        result.min_tau_seen = min(result.min_tau_seen, store.minimum())
        history.append(pool.best.value)
        if lower is not None and pool.best.value <= lower:
            break

    if pool.best is None:
        raise Infeasible("no admissible plan found")
    result.best = pool.best.plan
    result.orders = top[pool.best.order] if pool.best.order is not None else {}
    return result


def _decisions(entry: PoolEntry) -> dict[NodeId, tuple[int, int]]:
    return {k.node: (k.machine, k.delay) for k in entry.keys if isinstance(k, DecisionKey)}


# ---------------------------------------------------------------- jump sweep

@dataclass(frozen=True)
class SweepRow:
    depth: int
    jumps: int
    length: Optional[int]
    cost: Optional[Fraction]
    feasible: bool
    first_only: bool = False


def _contained(a: tuple[int, bool], b: tuple[int, bool]) -> bool:
    """Is the decision space of forecast setting ``a`` inside that of ``b``?"""
    (da, fa), (db, fb) = a, b
    return da == 0 or (da <= db and (fa or not fb))


def sweep_jumps(instance: ProblemInstance, depths: Sequence[int], params: Optional[AcoParams] = None,
                budgets: Optional[Sequence[int]] = None,
                first_only_depths: Sequence[int] = (1,),
                order_cache: Optional[dict] = None) -> list[SweepRow]:
    """Best length per (forecast depth, per-piece jump budget).

    Depths listed in ``first_only_depths`` forecast for the first piece
    only. Each cell starts from the best plans of every cell whose decision
    space it contains (smaller budget, narrower forecast), so rows are
    monotone by construction of the search, not by post-processing.
    ``order_cache`` shares greedy plans per step order across calls.
    """
    params = params or AcoParams()
    if budgets is None:
        floor = max((min_jumps(instance.types[t]) for t in {p.type_id for p in instance.pieces}), default=0)
        budgets = range(floor, floor + 5)
    settings = [(d, d in first_only_depths and d > 0) for d in depths]
    order = sorted(range(len(settings)), key=lambda i: (settings[i][0], not settings[i][1]))
    cache = order_cache if order_cache is not None else {}
    best: dict[tuple[int, int], Plan] = {}
    cells: dict[tuple[int, int], SweepRow] = {}
    for j in sorted(budgets):
        for i in order:
            depth, first_only = settings[i]
            seeds = [p for (i2, j2), p in best.items()
                     if j2 <= j and _contained(settings[i2], settings[i])]
            cell_params = dataclasses.replace(params, forecast=depth)
            try:
                res = aco_optimize(instance, MinMakespan(), cell_params, jump_budget=j,
                                   forecast_first_only=first_only, initial_plans=seeds,
                                   order_cache=cache)
            except Infeasible:
                cells[(i, j)] = SweepRow(depth, j, None, None, False, first_only)
                continue
            best[(i, j)] = res.best
            cells[(i, j)] = SweepRow(depth, j, res.best.makespan, res.best.cost, True, first_only)
    return [cells[(i, j)] for i in range(len(settings)) for j in sorted(budgets)]


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    lines = ["depth,jumps,length,cost,feasible"]
    for r in rows:
        length = "" if r.length is None else str(r.length)
        cost = "" if r.cost is None else repr(float(r.cost))
        lines.append(f"{r.depth},{r.jumps},{length},{cost},{'true' if r.feasible else 'false'}")
    return "\n".join(lines) + "\n"


def history_csv(history: Sequence) -> str:
    lines = ["iteration,best_objective"]
    for i, v in enumerate(history):
        if v is None:
            v = ""
        elif isinstance(v, Fraction):
            v = repr(float(v))
        lines.append(f"{i},{v}")
    return "\n".join(lines) + "\n"
