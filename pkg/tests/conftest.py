"""Shared fixtures and small builders for the test suite."""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path

import pytest

from agentplan.model import (
    CostModel,
    Piece,
    Placement,
    Plan,
    ProblemInstance,
    StepSpec,
    WorkpieceType,
    parse_problem,
)

ROOT = Path(__file__).resolve().parent.parent
PAPER = ROOT / "paper.md"


def bundled(name: str) -> ProblemInstance:
    return parse_problem((resources.files("agentplan.data") / name).read_text(encoding="utf-8"))


def paper_text() -> str:
    if not PAPER.is_file():
        pytest.skip("paper.md not available")
    return PAPER.read_text(encoding="utf-8")


def paper_table() -> list[tuple[int, dict[int, int], int]]:
    """Rows (step, {machine: length}, group) of the technological table in the paper."""
    text = paper_text()
    block = text[text.index(r"\begin{tabular}"):text.index(r"\end{tabular}")]
    rows = []
    for line in block.splitlines():
        cells = [c.strip() for c in re.sub(r"\\\\.*$", "", line).split("&")]
        if len(cells) == 5 and all(c.isdigit() for c in cells):
            ws, m1, m2, m3, order = map(int, cells)
            rows.append((ws, {1: m1, 2: m2, 3: m3}, order))
    return rows


def single_step(length: int = 2, machines: int = 1, horizon=None) -> ProblemInstance:
    ms = tuple(range(1, machines + 1))
    wt = WorkpieceType("A", (StepSpec(1, 1, {m: length for m in ms}),))
    return ProblemInstance(ms, {"A": wt}, (Piece(1, "A", 1),), CostModel.default(ms), horizon)


def sequential_plan(instance: ProblemInstance, piece_id: int, steps_machines) -> Plan:
    """Back-to-back placements of one piece for ``[(step, machine), ...]``."""
    wt = instance.type_of(piece_id)
    t, out = 0, []
    for sid, m in steps_machines:
        d = wt.step(sid).durations[m]
        out.append(Placement(piece_id, sid, m, t, t + d))
        t += d
    return Plan.build(out, instance)


# Table 1 piece: M3 for steps 1,2,3,4,6, then M2 for 5,7,10,11, then M1 for 8,9
TABLE1_TWO_JUMPS = [(1, 3), (2, 3), (3, 3), (4, 3), (6, 3), (5, 2), (7, 2), (10, 2), (11, 2), (8, 1), (9, 1)]


def fig6_plan(variant: str, instance: ProblemInstance) -> Plan:
    """The two decision sets of the three-piece example, completed to full plans.

    Positions in the figure count from 1, slots here from 0.
    """
    P = Placement
    common = [P(1, 1, 1, 0, 1), P(2, 1, 2, 0, 1), P(3, 1, 3, 0, 1),
              P(1, 2, 1, 1, 3), P(2, 2, 3, 1, 3), P(1, 3, 1, 3, 4)]
    if variant == "a":
        rest = [P(3, 2, 1, 4, 6), P(2, 3, 3, 3, 4), P(3, 3, 1, 6, 7)]
    else:
        rest = [P(3, 2, 3, 3, 5), P(2, 3, 2, 3, 4), P(3, 3, 1, 5, 6)]
    return Plan.build(common + rest, instance)


@pytest.fixture(scope="session")
def table_a() -> ProblemInstance:
    return bundled("tableA.problem")


@pytest.fixture(scope="session")
def table_a3() -> ProblemInstance:
    return bundled("tableA3.problem")


@pytest.fixture(scope="session")
def fig6() -> ProblemInstance:
    return bundled("fig6.problem")
