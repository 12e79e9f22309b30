import json
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentplan.errors import MissingSteps, ProblemSyntaxError, SemanticError
from agentplan.model import (
    CostModel,
    Piece,
    Placement,
    Plan,
    ProblemInstance,
    StepSpec,
    WorkpieceType,
    check_feasibility,
    compute_cost,
    compute_makespan,
    count_jumps,
    min_jumps,
    parse_plan,
    parse_problem,
    problem_to_dict,
    serialize_plan,
    serialize_problem,
    total_jumps,
)
from conftest import TABLE1_TWO_JUMPS, fig6_plan, paper_table, paper_text, sequential_plan


def _doc(instance):
    return problem_to_dict(instance)


# ---------------------------------------------------------------- parsing

def test_table1_fixture_matches_paper_rows(table_a):
    rows = paper_table()
    assert len(rows) == 11
    wt = table_a.types["A"]
    for ws, lengths, order in rows:
        step = wt.step(ws)
        assert step.order_group == order
        assert dict(step.durations) == lengths


def test_table1_group_sizes(table_a):
    sizes = [len(g) for g in table_a.types["A"].groups()]
    assert sizes == [1, 5, 1, 4]


def test_zero_pieces_is_valid(table_a):
    doc = _doc(table_a)
    doc["pieces"] = []
    inst = parse_problem(json.dumps(doc))
    assert inst.pieces == ()


def test_step_capable_nowhere_reports_path(table_a):
    doc = _doc(table_a)
    doc["types"]["A"][2]["durations"] = {"1": 0, "2": 0, "3": 0}
    with pytest.raises(SemanticError) as err:
        parse_problem(json.dumps(doc))
    assert ("types.A.steps[2]", "step capable on no machine") in err.value.issues


def test_all_issues_are_collected(table_a):
    doc = _doc(table_a)
    doc["types"]["A"][2]["durations"] = {"1": 0, "2": 0, "3": 0}
    doc["pieces"][0]["type"] = "Z"
    doc["cost"]["jump_cost"] = -1
    with pytest.raises(SemanticError) as err:
        parse_problem(json.dumps(doc))
    assert len(err.value.issues) >= 3


@pytest.mark.parametrize("groups, path", [
    ([2, 2], "types.A.steps[0].group"),
    ([1, 3], "types.A.steps[1].group"),
    ([1, 2, 1], "types.A.steps[2].group"),
])
def test_group_numbering_rules(groups, path):
    doc = {"machines": [1], "types": {"A": [
        {"id": i + 1, "group": g, "durations": {"1": 1}} for i, g in enumerate(groups)]},
        "pieces": [], "cost": {"machine_rate": {"1": 1}, "jump_cost": 1, "storage_cost": 0.1}}
    with pytest.raises(SemanticError) as err:
        parse_problem(json.dumps(doc))
    assert path in [p for p, _ in err.value.issues]


def test_durations_must_key_every_machine(table_a):
    doc = _doc(table_a)
    del doc["types"]["A"][0]["durations"]["2"]
    with pytest.raises(SemanticError):
        parse_problem(json.dumps(doc))


def test_homogeneous_flag_requires_equal_lengths(table_a):
    doc = _doc(table_a)
    doc["homogeneous"] = True
    assert parse_problem(json.dumps(doc)).homogeneous  # the paper's table is homogeneous
    doc["types"]["A"][1]["durations"] = {"1": 2, "2": 0, "3": 3}
    with pytest.raises(SemanticError) as err:
        parse_problem(json.dumps(doc))
    assert ("types.A.steps[1]", "homogeneous machines need equal lengths") in err.value.issues
    del doc["homogeneous"]
    assert not parse_problem(json.dumps(doc)).homogeneous


def test_truncated_document_reports_line(table_a):
    text = serialize_problem(table_a)
    with pytest.raises(ProblemSyntaxError) as err:
        parse_problem(text[: len(text) // 2])
    assert err.value.line is not None and err.value.line > 1


def test_round_trip_fixture(table_a3):
    assert parse_problem(serialize_problem(table_a3)) == table_a3


# ---------------------------------------------------------------- jumps

def test_single_step_piece_has_no_jumps():
    ms = (1, 2)
    wt = WorkpieceType("A", (StepSpec(1, 1, {1: 1, 2: 1}),))
    inst = ProblemInstance(ms, {"A": wt}, (Piece(1, "A", 1),), CostModel.default(ms))
    plan = Plan.build([Placement(1, 1, 2, 0, 1)], inst)
    assert count_jumps(plan, 1, inst) == 0


def test_table1_machine_sequence_has_two_jumps(table_a):
    plan = sequential_plan(table_a, 1, TABLE1_TWO_JUMPS)
    assert check_feasibility(plan, table_a) == []
    # independent count: changes in the machine sequence
    machines = [m for _, m in TABLE1_TWO_JUMPS]
    expected = sum(a != b for a, b in zip(machines, machines[1:]))
    assert count_jumps(plan, 1, table_a) == expected == 2


def test_alternating_machines_count_two():
    ms = (1, 2)
    wt = WorkpieceType("A", tuple(StepSpec(i, i, {1: 1, 2: 1}) for i in (1, 2, 3)))
    inst = ProblemInstance(ms, {"A": wt}, (Piece(1, "A", 1),), CostModel.default(ms))
    plan = sequential_plan(inst, 1, [(1, 1), (2, 2), (3, 1)])
    assert count_jumps(plan, 1, inst) == 2


def test_missing_steps_raise(table_a):
    plan = sequential_plan(table_a, 1, TABLE1_TWO_JUMPS[:5])
    with pytest.raises(MissingSteps):
        count_jumps(plan, 1, table_a)


def test_min_jumps_table1_matches_paper(table_a):
    assert "is equal to 2" in paper_text()
    assert min_jumps(table_a.types["A"]) == 2


def test_min_jumps_fig6_is_zero(fig6):
    assert min_jumps(fig6.types["F"]) == 0


def _brute_min_jumps(wt: WorkpieceType) -> int:
    """Independent check: try every group order and every machine sequence."""
    import itertools
    best = math.inf
    orders = [[]]
    for g in wt.groups():
        orders = [o + list(p) for o in orders for p in itertools.permutations([s.step_id for s in g])]
    for order in orders:
        for ms in itertools.product(*[wt.step(s).capable() for s in order]):
            best = min(best, sum(a != b for a, b in zip(ms, ms[1:])))
    return best


@st.composite
def small_types(draw, universal=False):
    machines = (1, 2, 3)
    n = draw(st.integers(1, 5))
    group, steps = 1, []
    for sid in range(1, n + 1):
        if sid > 1 and draw(st.booleans()):
            group += 1
        caps = draw(st.lists(st.sampled_from(machines), min_size=1, max_size=3, unique=True))
        if universal:
            caps = sorted(set(caps) | {2})
        steps.append(StepSpec(sid, group, {m: (1 if m in caps else 0) for m in machines}))
    return WorkpieceType("A", tuple(steps))


@settings(max_examples=60, deadline=None)
@given(small_types())
def test_min_jumps_equals_exhaustive_count(wt):
    assert min_jumps(wt) == _brute_min_jumps(wt)


@settings(max_examples=30, deadline=None)
@given(small_types(universal=True))
def test_min_jumps_zero_with_universal_machine(wt):
    assert min_jumps(wt) == 0


# ---------------------------------------------------------------- cost

def test_zero_rates_give_zero_cost(table_a):
    zero = CostModel({m: Fraction(0) for m in table_a.machines}, Fraction(0), Fraction(0))
    plan = sequential_plan(table_a, 1, TABLE1_TWO_JUMPS)
    assert compute_cost(plan, zero, table_a) == 0


def test_cost_of_two_jump_plan(table_a):
    no_storage = CostModel({m: Fraction(1) for m in table_a.machines}, Fraction(1), Fraction(0))
    plan = sequential_plan(table_a, 1, TABLE1_TWO_JUMPS)
    durations = sum(min(d for d in s.durations.values() if d) for s in table_a.types["A"].steps)
    assert durations == 18
    assert compute_cost(plan, no_storage, table_a) == durations + 2 == 20


def test_one_delayed_slot_costs_storage(table_a):
    plan = sequential_plan(table_a, 1, TABLE1_TWO_JUMPS)
    last = plan.placements[-1]
    shifted = Placement(last.piece_id, last.step_id, last.machine, last.start + 1, last.finish + 1)
    delayed = Plan.build(list(plan.placements[:-1]) + [shifted], table_a)
    cost = CostModel({m: Fraction(1) for m in table_a.machines}, Fraction(1), Fraction(1, 10))
    assert compute_cost(delayed, cost, table_a) == Fraction(201, 10)
    assert delayed.cost == Fraction(201, 10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 5), st.integers(0, 5), st.integers(0, 5), st.integers(1, 3), st.integers(0, 3))
def test_cost_monotone_in_every_rate(rate, jump, storage, which, bump):
    from conftest import bundled
    inst = bundled("tableA.problem")
    plan = sequential_plan(inst, 1, TABLE1_TWO_JUMPS)
    plan = Plan.build([p if p.step_id != 9 else Placement(1, 9, 1, p.start + 2, p.finish + 2)
                       for p in plan.placements], inst)
    base = CostModel({m: Fraction(rate) for m in inst.machines}, Fraction(jump), Fraction(storage, 10))
    c0 = compute_cost(plan, base, inst)
    bumped_rates = dict(base.machine_rate)
    bumped_rates[which] += bump
    for other in (CostModel(bumped_rates, base.jump_cost, base.storage_cost),
                  CostModel(base.machine_rate, base.jump_cost + bump, base.storage_cost),
                  CostModel(base.machine_rate, base.jump_cost, base.storage_cost + bump)):
        assert compute_cost(plan, other, inst) >= c0


# ---------------------------------------------------------------- feasibility

def test_empty_plan_for_empty_instance(table_a):
    empty = table_a.replace(pieces=())
    assert check_feasibility(Plan.empty(), empty) == []


def test_fig6_caption_plans_are_feasible(fig6):
    text = paper_text()
    assert "M1 in position 5" in text and "M3 in position 4" in text
    a, b = fig6_plan("a", fig6), fig6_plan("b", fig6)
    assert check_feasibility(a, fig6) == []
    assert check_feasibility(b, fig6) == []
    assert (a.makespan, b.makespan) == (7, 6)


def test_overlap_names_machine_and_slots(fig6):
    plan = fig6_plan("b", fig6)
    moved = [p if (p.piece_id, p.step_id) != (2, 3) else Placement(2, 3, 3, 3, 4)
             for p in plan.placements]
    violations = check_feasibility(Plan.build(moved, fig6), fig6)
    assert len(violations) == 1
    v = violations[0]
    assert v.kind == "MachineOverlap" and v.machine == 3 and v.slots == (3, 4)


def test_priority_violation_detected(table_a3):
    p1 = sequential_plan(table_a3.replace(pieces=(Piece(1, "A", 1),)), 1, TABLE1_TWO_JUMPS)
    # piece 2 uses the same machine sequence shifted 18 slots; piece 1 is late on purpose
    shift = [Placement(1, p.step_id, p.machine, p.start + 18, p.finish + 18) for p in p1.placements]
    early = [Placement(2, p.step_id, p.machine, p.start, p.finish) for p in p1.placements]
    inst = table_a3.replace(pieces=table_a3.pieces[:2])
    kinds = {v.kind for v in check_feasibility(Plan.build(shift + early, inst), inst)}
    assert kinds == {"Priority"}


def test_group_precedence_and_capability(table_a):
    plan = sequential_plan(table_a, 1, TABLE1_TWO_JUMPS)
    swapped = [p if p.step_id != 1 else Placement(1, 1, 3, 17, 18) for p in plan.placements]
    kinds = {v.kind for v in check_feasibility(Plan.build(swapped, table_a), table_a)}
    assert "GroupPrecedence" in kinds
    bad = [p if p.step_id != 1 else Placement(1, 1, 2, 0, 1) for p in plan.placements]
    assert {v.kind for v in check_feasibility(Plan.build(bad, table_a), table_a)} == {"Incapable"}


def test_plan_document_round_trip(fig6):
    plan = fig6_plan("b", fig6)
    again = parse_plan(serialize_plan(plan), fig6)
    assert again == plan
    assert compute_makespan(again) == again.makespan == 6
    assert total_jumps(again) == again.jumps


def test_table1_makespan_lower_bound(table_a):
    plan = sequential_plan(table_a, 1, TABLE1_TWO_JUMPS)
    assert plan.makespan == sum(r[1][min(m for m, d in r[1].items() if d)] for r in paper_table()) == 18
