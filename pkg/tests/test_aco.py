import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentplan.aco_opt import (
    AcoParams,
    DecisionKey,
    OptimizationPool,
    PheromoneStore,
    PoolEntry,
    aco_optimize,
    construct_solution,
    decision_probabilities,
    enumerate_group_orders,
    evaporate_and_deposit,
    history_csv,
    sweep_csv,
    sweep_jumps,
)
from agentplan.csp_agents import NodeId, PrimaryAlgorithm, solve_csp
from agentplan.errors import GroupTooLarge, Infeasible
from agentplan.generate import random_instance
from agentplan.model import (
    MinCost,
    MinCostAtLength,
    MinMakespan,
    Placement,
    Plan,
    StepSpec,
    WorkpieceType,
    check_feasibility,
    parse_problem,
)
from agentplan.oracle import brute_force
from conftest import paper_text

FAST = AcoParams(ants=4, iterations=10)


def _key(i, m=1, d=0):
    return DecisionKey(NodeId(1, i), m, d)


# ---------------------------------------------------------------- group orders

def test_table1_order_count(table_a):
    orders = enumerate_group_orders(table_a.types["A"])
    sizes = [len(g) for g in table_a.types["A"].groups()]
    assert len(orders) == math.prod(math.factorial(k) for k in sizes) == 2880
    assert len(set(orders)) == len(orders)
    assert orders[0] == tuple(range(1, 12))
    assert "2881" in paper_text()  # the paper's count is off by one


def test_group_order_is_respected(table_a):
    group = {s.step_id: s.order_group for s in table_a.types["A"].steps}
    for order in enumerate_group_orders(table_a.types["A"])[::97]:
        gs = [group[s] for s in order]
        assert gs == sorted(gs)


def test_singleton_groups_have_one_order(fig6):
    assert enumerate_group_orders(fig6.types["F"]) == [(1, 2, 3)]


def test_large_group_refused():
    wt = WorkpieceType("A", tuple(StepSpec(i, 1, {1: 1}) for i in range(1, 10)))
    with pytest.raises(GroupTooLarge):
        enumerate_group_orders(wt)


# ---------------------------------------------------------------- probabilities

def test_single_candidate_probability():
    assert decision_probabilities([_key(1)], PheromoneStore(), AcoParams(), lambda k: 1.0) == [1.0]


def test_uniform_probabilities():
    keys = [_key(i) for i in range(1, 5)]
    assert decision_probabilities(keys, PheromoneStore(), AcoParams(), lambda k: 0.5) == [0.25] * 4


def test_weighted_probabilities():
    store = PheromoneStore()
    keys = [_key(1), _key(2), _key(3)]
    store[keys[0]] = 2.0
    probs = decision_probabilities(keys, store, AcoParams(alpha=1), lambda k: 1.0)
    assert probs == pytest.approx([0.5, 0.25, 0.25], abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 100), min_size=1, max_size=12),
       st.lists(st.floats(0.01, 1), min_size=12, max_size=12),
       st.floats(0, 3), st.floats(0, 3), st.floats(0.01, 1000))
def test_probability_law(taus, etas, alpha, beta, scale):
    keys = [_key(i + 1) for i in range(len(taus))]
    store, scaled = PheromoneStore(), PheromoneStore()
    for k, t in zip(keys, taus):
        store[k] = t
        scaled[k] = t * scale
    params = AcoParams(alpha=alpha, beta=beta)
    eta = {k: e for k, e in zip(keys, etas)}
    p = decision_probabilities(keys, store, params, eta.__getitem__)
    q = decision_probabilities(keys, scaled, params, eta.__getitem__)
    assert all(x >= 0 for x in p)
    assert abs(math.fsum(p) - 1.0) <= 1e-12
    assert q == pytest.approx(p, rel=1e-9, abs=1e-12)


# ---------------------------------------------------------------- pheromone update

def test_evaporation_only():
    store = PheromoneStore(1.0, 0.01)
    store[_key(1)] = 1.0
    evaporate_and_deposit(store, OptimizationPool(3), None, AcoParams(rho=0.1), 1.0)
    assert store[_key(1)] == pytest.approx(0.9)
    assert store[_key(2)] == pytest.approx(0.9)


def test_zero_evaporation_accumulates():
    store = PheromoneStore()
    pool = OptimizationPool(3)
    entry = PoolEntry(10, Plan.empty(), frozenset({_key(1)}))
    pool.add(entry)
    before = store[_key(1)]
    for _ in range(3):
        evaporate_and_deposit(store, pool, entry, AcoParams(rho=0.0), 10.0)
        assert store[_key(1)] >= before
        before = store[_key(1)]
    assert store[_key(2)] == 1.0


def test_deposit_is_q_over_value():
    store = PheromoneStore(1.0, 0.01)
    pool = OptimizationPool(3)
    entry = PoolEntry(43, Plan.empty(), frozenset({_key(1)}))
    pool.add(entry)
    evaporate_and_deposit(store, pool, entry, AcoParams(rho=0.1), 43.0)
    # evaporated default 0.9, plus one deposit of 43/43 for a key used by both elites
    assert store[_key(1)] == pytest.approx(1.9)


def test_floor_holds():
    store = PheromoneStore(1.0, 0.05)
    for _ in range(200):
        store.evaporate(0.5)
    assert store.minimum() == 0.05


# ---------------------------------------------------------------- pool

def _plan(start):
    return Plan((Placement(1, 1, 1, start, start + 1),), start + 1, 0, 1)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 20), max_size=40), st.integers(1, 6))
def test_pool_discipline(starts, size):
    pool = OptimizationPool(size)
    for s in starts:
        pool.add(PoolEntry(s + 1, _plan(s)))
    ranks = [e.rank() for e in pool]
    assert ranks == sorted(ranks)
    assert len(pool) <= size
    assert len({e.plan.placements for e in pool}) == len(pool)
    if starts:
        assert pool.best.value == min(starts) + 1


# ---------------------------------------------------------------- construction

def test_depth_zero_matches_greedy(table_a3):
    plan = construct_solution(table_a3, None, PheromoneStore(), AcoParams(forecast=0),
                              np.random.default_rng(0), greedy=True)
    assert plan == solve_csp(table_a3)


def test_seeded_construction_is_repeatable(table_a3):
    params = AcoParams(forecast=2)
    plans = {construct_solution(table_a3, None, PheromoneStore(), params, np.random.default_rng(5))
             for _ in range(3)}
    assert len(plans) == 1
    plan = plans.pop()
    assert check_feasibility(plan, table_a3) == []


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 3), st.booleans())
def test_constructions_are_feasible(seed, forecast, first_only):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, max_pieces=4, max_steps=5, max_machines=3)
    plan = construct_solution(inst, None, PheromoneStore(), AcoParams(forecast=forecast), rng,
                              forecast_first_only=first_only)
    assert check_feasibility(plan, inst) == []


# ---------------------------------------------------------------- optimizer

def test_zero_iterations_returns_greedy(table_a3):
    res = aco_optimize(table_a3, MinMakespan(), AcoParams(iterations=0))
    assert res.best == solve_csp(table_a3)
    assert res.history == []


def test_table1_single_piece_optimum(table_a):
    res = aco_optimize(table_a, MinMakespan(), AcoParams(ants=2, iterations=2))
    assert res.best.makespan == 18


def test_fig6_reaches_oracle_optimum(fig6):
    res = aco_optimize(fig6, MinMakespan(), AcoParams(seed=7))
    assert res.best.makespan == brute_force(fig6).value == 6
    assert check_feasibility(res.best, fig6) == []


def test_history_monotone_and_tau_bounds(fig6):
    params = AcoParams(ants=5, iterations=30, forecast=1)
    res = aco_optimize(fig6, MinCost(), params)
    values = [v for v in res.history if v is not None]
    assert all(b <= a for a, b in zip(values, values[1:]))
    q = float(solve_csp(fig6).cost)
    assert res.min_tau_seen >= params.tau_min
    assert res.max_tau_seen <= params.tau0 + params.iterations * q / float(res.pool.best.value) + 1e-9
    assert values[-1] == res.best.cost


def test_cost_at_length_respects_length(fig6):
    res = aco_optimize(fig6, MinCostAtLength(7), FAST)
    assert res.best.makespan <= 7
    with pytest.raises(Infeasible):
        aco_optimize(fig6, MinCostAtLength(3), FAST)


def test_jump_budget_below_minimum_is_infeasible(table_a):
    with pytest.raises(Infeasible):
        aco_optimize(table_a, MinMakespan(), FAST, jump_budget=1)


def test_params_validation():
    for bad in (dict(rho=1.0), dict(rho=-0.1), dict(alpha=-1), dict(forecast=-1), dict(ants=0),
                dict(tau_min=0)):
        with pytest.raises(ValueError):
            AcoParams(**bad)


# ---------------------------------------------------------------- dominance by exhaustive scripts

class _Scripted:
    """Takes the scripted option at each decision, then falls back to the greedy scan."""

    def __init__(self, script, forecast):
        self.script = script
        self.forecast = forecast
        self.counts = []

    def candidates(self, net, node, lower):
        options = []
        for m in node.spec.capable():
            d = node.spec.durations[m]
            cal = net.calendars[m]
            free = [s for s in range(lower, net.horizon - d + 1) if cal.is_free(s, s + d)]
            if free:
                options += [(free[0] + k, m, k) for k in range(self.forecast + 1)
                            if free[0] + k + d <= net.horizon and cal.is_free(free[0] + k, free[0] + k + d)]
        options.sort()
        k = len(self.counts)
        self.counts.append(len(options))
        if options:
            yield options[min(self.script[k] if k < len(self.script) else 0, len(options) - 1)]
        yield from net.scan(node, lower)


def _best_over_scripts(instance, forecast):
    best = math.inf

    def explore(prefix):
        nonlocal best
        chooser = _Scripted(prefix, forecast)
        plan = PrimaryAlgorithm(instance, chooser=chooser).solve()
        if len(chooser.counts) <= len(prefix):
            best = min(best, plan.makespan)
            return
        for choice in range(max(chooser.counts[len(prefix)], 1)):
            explore(prefix + [choice])

    explore([])
    return best


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_larger_forecast_never_worse(seed):
    inst = random_instance(np.random.default_rng(seed), max_pieces=2, max_steps=2, max_machines=2)
    values = [_best_over_scripts(inst, f) for f in (0, 1, 2)]
    assert values[0] >= values[1] >= values[2] >= brute_force(inst).value


# ---------------------------------------------------------------- sweep and csv

def _two_machine_type():
    doc = {"machines": [1, 2], "types": {"A": [
        {"id": 1, "group": 1, "durations": {"1": 1, "2": 0}},
        {"id": 2, "group": 2, "durations": {"1": 0, "2": 2}},
        {"id": 3, "group": 2, "durations": {"1": 1, "2": 1}}]},
        "pieces": [{"id": 1, "type": "A", "priority": 1}, {"id": 2, "type": "A", "priority": 2}],
        "cost": {"machine_rate": {"1": 1, "2": 1}, "jump_cost": 1, "storage_cost": 0.1}}
    return parse_problem(json.dumps(doc))


def test_sweep_rows_and_infeasible_budget():
    inst = _two_machine_type()
    rows = sweep_jumps(inst, [0, 2], FAST, budgets=[0, 1, 2])
    assert [(r.depth, r.jumps) for r in rows] == [(0, 0), (0, 1), (0, 2), (2, 0), (2, 1), (2, 2)]
    assert [r.feasible for r in rows if r.jumps == 0] == [False, False]
    by = {(r.depth, r.jumps): r.length for r in rows if r.feasible}
    for j in (1, 2):
        assert by[(2, j)] <= by[(0, j)]
    assert by[(0, 2)] <= by[(0, 1)]
    text = sweep_csv(rows)
    assert text.splitlines()[0] == "depth,jumps,length,cost,feasible"
    assert text.splitlines()[1] == "0,0,,,false"


def test_depth_zero_sweep_equals_greedy_family():
    inst = _two_machine_type()
    rows = sweep_jumps(inst, [0], dataclasses.replace(FAST, iterations=0), budgets=[5])
    assert rows[0].length == solve_csp(inst).makespan


def test_history_csv_format():
    from fractions import Fraction
    assert history_csv([5, Fraction(21, 2), None]) == "iteration,best_objective\n0,5\n1,10.5\n2,\n"
