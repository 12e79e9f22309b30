"""Domain types, problem documents and plan metrics.

Time is a grid of integer slots. A working step placed at ``start`` with
length ``d`` occupies ``[start, start + d)``; the next step of the same
piece may begin at ``finish`` itself.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence, Union

from .errors import MissingSteps, ProblemSyntaxError, SemanticError

DEFAULT_MACHINE_RATE = Fraction(1)
DEFAULT_JUMP_COST = Fraction(1)
DEFAULT_STORAGE_COST = Fraction(1, 10)


@dataclass(frozen=True)
class StepSpec:
    step_id: int
    order_group: int
    durations: Mapping[int, int]  # machine id -> slots, 0 = incapable

    def capable(self) -> tuple[int, ...]:
        return tuple(m for m in sorted(self.durations) if self.durations[m] > 0)

    def min_duration(self) -> int:
        return min(d for d in self.durations.values() if d > 0)

    def max_duration(self) -> int:
        return max(self.durations.values())


@dataclass(frozen=True)
class WorkpieceType:
    type_id: str
    steps: tuple[StepSpec, ...]

    def step(self, step_id: int) -> StepSpec:
        for s in self.steps:
            if s.step_id == step_id:
                return s
        raise KeyError(f"type {self.type_id} has no step {step_id}")

    def groups(self) -> list[list[StepSpec]]:
        """Steps bucketed by order group, in group order."""
        out: dict[int, list[StepSpec]] = defaultdict(list)
        for s in self.steps:
            out[s.order_group].append(s)
        return [out[g] for g in sorted(out)]

    def listed_order(self) -> tuple[int, ...]:
        return tuple(s.step_id for s in self.steps)


@dataclass(frozen=True)
class Piece:
    piece_id: int
    type_id: str
    priority: int


@dataclass(frozen=True)
class CostModel:
    machine_rate: Mapping[int, Fraction]
    jump_cost: Fraction = DEFAULT_JUMP_COST
    storage_cost: Fraction = DEFAULT_STORAGE_COST

    @classmethod
    def default(cls, machines: Iterable[int]) -> "CostModel":
        return cls({m: DEFAULT_MACHINE_RATE for m in machines})

    def rate(self, machine: int) -> Fraction:
        return self.machine_rate.get(machine, DEFAULT_MACHINE_RATE)


@dataclass(frozen=True)
class DownInterval:
    machine: int
    start: int
    end: int  # exclusive

    def overlaps(self, start: int, finish: int) -> bool:
        return start < self.end and self.start < finish


@dataclass(frozen=True)
class ProblemInstance:
    machines: tuple[int, ...]
    types: Mapping[str, WorkpieceType]
    pieces: tuple[Piece, ...]
    cost: CostModel
    horizon_hint: Optional[int] = None
    down: tuple[DownInterval, ...] = ()
    homogeneous: bool = False

    def piece(self, piece_id: int) -> Piece:
        for p in self.pieces:
            if p.piece_id == piece_id:
                return p
        raise KeyError(f"no piece {piece_id}")

    def type_of(self, piece_id: int) -> WorkpieceType:
        return self.types[self.piece(piece_id).type_id]

    def node_count(self) -> int:
        return sum(len(self.types[p.type_id].steps) for p in self.pieces)

    def piece_work(self, piece: Piece) -> int:
        """Sum of the longest capable duration of each step of ``piece``."""
        return sum(s.max_duration() for s in self.types[piece.type_id].steps)

    def default_horizon(self) -> int:
        """Twice the per-machine share of the heaviest piece's work times the piece count."""
        if not self.pieces:
            return 1
        work = max(self.piece_work(p) for p in self.pieces)
        return max(1, 2 * math.ceil(work * len(self.pieces) / len(self.machines)))

    def replace(self, **changes) -> "ProblemInstance":
        fields = dict(
            machines=self.machines, types=self.types, pieces=self.pieces,
            cost=self.cost, horizon_hint=self.horizon_hint, down=self.down,
            homogeneous=self.homogeneous,
        )
        fields.update(changes)
        return ProblemInstance(**fields)


@dataclass(frozen=True, order=True)
class Placement:
    piece_id: int
    step_id: int
    machine: int
    start: int
    finish: int

    @property
    def length(self) -> int:
        return self.finish - self.start


def placement_key(p: Placement) -> tuple[int, int, int, int]:
    """Canonical plan order: by start slot, then machine, piece, step."""
    return (p.start, p.machine, p.piece_id, p.step_id)


@dataclass(frozen=True)
class Plan:
    placements: tuple[Placement, ...]
    makespan: int
    jumps: int
    cost: Fraction

    @classmethod
    def build(cls, placements: Iterable[Placement], instance: ProblemInstance) -> "Plan":
        ps = tuple(sorted(placements, key=placement_key))
        makespan, jumps, cost = _metrics(ps, instance.cost)
        return cls(ps, makespan, jumps, cost)

    @classmethod
    def empty(cls) -> "Plan":
        return cls((), 0, 0, Fraction(0))

    def for_piece(self, piece_id: int) -> list[Placement]:
        return sorted((p for p in self.placements if p.piece_id == piece_id),
                      key=lambda p: (p.start, p.step_id))

    def piece_ids(self) -> list[int]:
        return sorted({p.piece_id for p in self.placements})

    def lookup(self) -> dict[tuple[int, int], Placement]:
        return {(p.piece_id, p.step_id): p for p in self.placements}

    def max_piece_jumps(self) -> int:
        return max((count_jumps(self, pid) for pid in self.piece_ids()), default=0)


# ---------------------------------------------------------------- parsing

def _fraction(value, path: str, issues: list) -> Fraction:
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        issues.append((path, "expected a number"))
        return Fraction(0)
    try:
        f = Fraction(repr(value)) if isinstance(value, float) else Fraction(value)
    except (ValueError, ZeroDivisionError):
        issues.append((path, f"not a rational number: {value!r}"))
        return Fraction(0)
    if isinstance(value, float) and not math.isfinite(value):
        issues.append((path, "must be finite"))
    if f < 0:
        issues.append((path, "must be >= 0"))
    return f


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _machine_key(key, path: str, issues: list) -> Optional[int]:
    try:
        return int(key)
    except (TypeError, ValueError):
        issues.append((path, f"machine id must be an integer, got {key!r}"))
        return None


def parse_problem(text: str) -> ProblemInstance:
    """Parse and validate a problem document.

    Raises ProblemSyntaxError for malformed text and SemanticError listing
    every invariant violation found.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemSyntaxError(exc.msg, exc.lineno) from None
    if not isinstance(doc, dict):
        raise ProblemSyntaxError("top level must be a mapping", 1)
    return problem_from_dict(doc)


def problem_from_dict(doc: Mapping) -> ProblemInstance:
    issues: list[tuple[str, str]] = []

    machines_raw = doc.get("machines")
    machines: list[int] = []
    if not isinstance(machines_raw, list) or not machines_raw:
        issues.append(("machines", "must be a non-empty list of machine ids"))
    else:
        for i, m in enumerate(machines_raw):
            if not _is_int(m) or m <= 0:
                issues.append((f"machines[{i}]", "machine id must be a positive integer"))
            elif m in machines:
                issues.append((f"machines[{i}]", f"duplicate machine id {m}"))
            else:
                machines.append(m)
    machine_set = set(machines)
    homogeneous = bool(doc.get("homogeneous", False))

    types: dict[str, WorkpieceType] = {}
    types_raw = doc.get("types", {})
    if not isinstance(types_raw, dict):
        issues.append(("types", "must be a mapping of type symbol to step list"))
        types_raw = {}
    for type_id, steps_raw in types_raw.items():
        tpath = f"types.{type_id}"
        if not isinstance(steps_raw, list) or not steps_raw:
            issues.append((tpath, "must be a non-empty list of steps"))
            continue
        steps: list[StepSpec] = []
        for i, s in enumerate(steps_raw):
            spath = f"{tpath}.steps[{i}]"
            if not isinstance(s, dict):
                issues.append((spath, "step must be a mapping"))
                continue
            sid, group, durs_raw = s.get("id"), s.get("group"), s.get("durations")
            ok = True
            if not _is_int(sid) or sid <= 0:
                issues.append((f"{spath}.id", "must be a positive integer"))
                ok = False
            elif any(x.step_id == sid for x in steps):
                issues.append((f"{spath}.id", f"duplicate step id {sid}"))
                ok = False
            if not _is_int(group) or group <= 0:
                issues.append((f"{spath}.group", "must be a positive integer"))
                ok = False
            if not isinstance(durs_raw, dict):
                issues.append((f"{spath}.durations", "must be a mapping machine -> length"))
                continue
            durs: dict[int, int] = {}
            for k, v in durs_raw.items():
                m = _machine_key(k, f"{spath}.durations", issues)
                if m is None:
                    ok = False
                    continue
                if m not in machine_set:
                    issues.append((f"{spath}.durations.{k}", f"unknown machine {m}"))
                    ok = False
                if not _is_int(v) or v < 0:
                    issues.append((f"{spath}.durations.{k}", "length must be a non-negative integer"))
                    ok = False
                    continue
                durs[m] = v
            missing = machine_set - set(durs)
            if missing:
                issues.append((f"{spath}.durations",
                               f"missing machines {sorted(missing)}"))
                ok = False
            positive = {v for v in durs.values() if v > 0}
            if not positive:
                issues.append((spath, "step capable on no machine"))
                ok = False
            elif homogeneous and len(positive) > 1:
                issues.append((spath, "homogeneous machines need equal lengths"))
            if ok:
                steps.append(StepSpec(sid, group, {m: durs[m] for m in sorted(durs)}))
        if len(steps) == len(steps_raw):
            groups = [s.order_group for s in steps]
            if groups[0] != 1:
                issues.append((f"{tpath}.steps[0].group", "order groups must start at 1"))
            for i in range(1, len(groups)):
                if groups[i] < groups[i - 1]:
                    issues.append((f"{tpath}.steps[{i}].group", "order groups must be non-decreasing"))
                elif groups[i] > groups[i - 1] + 1:
                    issues.append((f"{tpath}.steps[{i}].group", "gap in order groups"))
            types[str(type_id)] = WorkpieceType(str(type_id), tuple(steps))

    pieces: list[Piece] = []
    pieces_raw = doc.get("pieces", [])
    if not isinstance(pieces_raw, list):
        issues.append(("pieces", "must be a list"))
        pieces_raw = []
    seen_ids: set[int] = set()
    for i, p in enumerate(pieces_raw):
        ppath = f"pieces[{i}]"
        if not isinstance(p, dict):
            issues.append((ppath, "piece must be a mapping"))
            continue
        pid, tid, prio = p.get("id"), p.get("type"), p.get("priority", 1)
        ok = True
        if not _is_int(pid) or pid <= 0:
            issues.append((f"{ppath}.id", "must be a positive integer"))
            ok = False
        elif pid in seen_ids:
            issues.append((f"{ppath}.id", f"duplicate piece id {pid}"))
            ok = False
        if tid not in types_raw:
            issues.append((f"{ppath}.type", f"unknown type {tid!r}"))
            ok = False
        if not _is_int(prio) or prio <= 0:
            issues.append((f"{ppath}.priority", "must be a positive integer"))
            ok = False
        if ok:
            seen_ids.add(pid)
            pieces.append(Piece(pid, str(tid), prio))

    cost_raw = doc.get("cost", {})
    if not isinstance(cost_raw, dict):
        issues.append(("cost", "must be a mapping"))
        cost_raw = {}
    rates: dict[int, Fraction] = {m: DEFAULT_MACHINE_RATE for m in machines}
    rates_raw = cost_raw.get("machine_rate", {})
    if not isinstance(rates_raw, dict):
        issues.append(("cost.machine_rate", "must be a mapping"))
        rates_raw = {}
    for k, v in rates_raw.items():
        m = _machine_key(k, "cost.machine_rate", issues)
        if m is None:
            continue
        if m not in machine_set:
            issues.append((f"cost.machine_rate.{k}", f"unknown machine {m}"))
        rates[m] = _fraction(v, f"cost.machine_rate.{k}", issues)
    jump = _fraction(cost_raw.get("jump_cost", DEFAULT_JUMP_COST), "cost.jump_cost", issues)
    storage = _fraction(cost_raw.get("storage_cost", DEFAULT_STORAGE_COST), "cost.storage_cost", issues)

    horizon = doc.get("horizon")
    if horizon is not None and (not _is_int(horizon) or horizon <= 0):
        issues.append(("horizon", "must be a positive integer"))
        horizon = None

    down: list[DownInterval] = []
    for i, d in enumerate(doc.get("down", []) or []):
        dpath = f"down[{i}]"
        if not isinstance(d, dict):
            issues.append((dpath, "must be a mapping"))
            continue
        m, a, b = d.get("machine"), d.get("from"), d.get("to")
        if m not in machine_set:
            issues.append((f"{dpath}.machine", f"unknown machine {m!r}"))
        elif not (_is_int(a) and _is_int(b) and 0 <= a < b):
            issues.append((dpath, "need integers 0 <= from < to"))
        else:
            down.append(DownInterval(m, a, b))

    if issues:
        raise SemanticError(issues)
    return ProblemInstance(
        machines=tuple(machines),
        types=types,
        pieces=tuple(pieces),
        cost=CostModel(rates, jump, storage),
        horizon_hint=horizon,
        down=tuple(down),
        homogeneous=homogeneous,
    )


def validate(instance: ProblemInstance) -> ProblemInstance:
    """Re-run document validation on an in-memory instance."""
    return problem_from_dict(json.loads(serialize_problem(instance)))


def _number(f: Fraction):
    if f.denominator == 1:
        return f.numerator
    as_float = float(f)
    if Fraction(repr(as_float)) == f:
        return as_float
    return f"{f.numerator}/{f.denominator}"


def problem_to_dict(instance: ProblemInstance) -> dict:
    doc: dict = {
        "machines": list(instance.machines),
        "types": {
            t.type_id: [
                {"id": s.step_id, "group": s.order_group,
                 "durations": {str(m): s.durations[m] for m in sorted(s.durations)}}
                for s in t.steps
            ]
            for t in instance.types.values()
        },
        "pieces": [{"id": p.piece_id, "type": p.type_id, "priority": p.priority}
                   for p in instance.pieces],
        "cost": {
            "machine_rate": {str(m): _number(r)
                             for m, r in sorted(instance.cost.machine_rate.items())},
            "jump_cost": _number(instance.cost.jump_cost),
            "storage_cost": _number(instance.cost.storage_cost),
        },
    }
    if instance.horizon_hint is not None:
        doc["horizon"] = instance.horizon_hint
    if instance.down:
        doc["down"] = [{"machine": d.machine, "from": d.start, "to": d.end} for d in instance.down]
    if instance.homogeneous:
        doc["homogeneous"] = True
    return doc


def serialize_problem(instance: ProblemInstance) -> str:
    return json.dumps(problem_to_dict(instance), indent=2, ensure_ascii=False) + "\n"


def plan_to_dict(plan: Plan) -> dict:
    return {
        "placements": [
            {"piece": p.piece_id, "step": p.step_id, "machine": p.machine,
             "start": p.start, "finish": p.finish}
            for p in plan.placements
        ],
        "metrics": {"makespan": plan.makespan, "jumps": plan.jumps, "cost": float(plan.cost)},
    }


def serialize_plan(plan: Plan) -> str:
    return json.dumps(plan_to_dict(plan), indent=2) + "\n"


def parse_plan(text: str, instance: ProblemInstance) -> Plan:
    """Load a plan document; metrics are recomputed from the placements."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemSyntaxError(exc.msg, exc.lineno) from None
    issues = []
    placements = []
    for i, p in enumerate(doc.get("placements", []) if isinstance(doc, dict) else []):
        try:
            placements.append(Placement(int(p["piece"]), int(p["step"]), int(p["machine"]),
                                        int(p["start"]), int(p["finish"])))
        except (KeyError, TypeError, ValueError):
            issues.append((f"placements[{i}]", "needs integer piece, step, machine, start, finish"))
    if issues:
        raise SemanticError(issues)
    return Plan.build(placements, instance)


# ---------------------------------------------------------------- metrics

def compute_makespan(plan: Plan) -> int:
    return max((p.finish for p in plan.placements), default=0)


def count_jumps(plan: Plan, piece_id: int, instance: Optional[ProblemInstance] = None) -> int:
    """Machine changes between consecutive steps (in start order) of one piece."""
    steps = plan.for_piece(piece_id)
    if instance is not None:
        expected = {s.step_id for s in instance.type_of(piece_id).steps}
        if {p.step_id for p in steps} != expected:
            raise MissingSteps(f"piece {piece_id} is missing steps "
                               f"{sorted(expected - {p.step_id for p in steps})}")
    elif not steps:
        raise MissingSteps(f"piece {piece_id} has no placements")
    return sum(1 for a, b in zip(steps, steps[1:]) if a.machine != b.machine)


def total_jumps(plan: Plan) -> int:
    return sum(count_jumps(plan, pid) for pid in plan.piece_ids())


def step_delays(plan: Plan) -> dict[tuple[int, int], int]:
    """Idle slots of each step after its predecessor finished.

    The first step of a piece has no predecessor and never counts as stored.
    """
    out = {}
    for pid in plan.piece_ids():
        prev = None
        for p in plan.for_piece(pid):
            out[(pid, p.step_id)] = 0 if prev is None else max(0, p.start - prev.finish)
            prev = p
    return out


def compute_cost(plan: Plan, cost: CostModel, baseline: ProblemInstance) -> Fraction:
    processing = sum((cost.rate(p.machine) * p.length for p in plan.placements), Fraction(0))
    jumps = total_jumps(plan)
    delay = sum(step_delays(plan).values())
    return processing + cost.jump_cost * jumps + cost.storage_cost * delay


def _metrics(placements: Sequence[Placement], cost: CostModel) -> tuple[int, int, Fraction]:
    """Makespan, jumps and cost in one pass; same results as the functions above."""
    busy: dict[int, int] = defaultdict(int)
    by_piece: dict[int, list[Placement]] = defaultdict(list)
    makespan = 0
    for p in placements:
        busy[p.machine] += p.finish - p.start
        by_piece[p.piece_id].append(p)
        makespan = max(makespan, p.finish)
    jumps = delay = 0
    for steps in by_piece.values():
        steps.sort(key=lambda p: (p.start, p.step_id))
        for a, b in zip(steps, steps[1:]):
            jumps += a.machine != b.machine
            delay += max(0, b.start - a.finish)
    processing = sum((cost.rate(m) * n for m, n in busy.items()), Fraction(0))
    return makespan, jumps, processing + cost.jump_cost * jumps + cost.storage_cost * delay


# ---------------------------------------------------------------- objectives

@dataclass(frozen=True)
class MinMakespan:
    def value(self, plan: Plan):
        return plan.makespan

    def admits(self, plan: Plan) -> bool:
        return True


@dataclass(frozen=True)
class MinCost:
    def value(self, plan: Plan):
        return plan.cost

    def admits(self, plan: Plan) -> bool:
        return True


@dataclass(frozen=True)
class MinCostAtLength:
    length: int

    def value(self, plan: Plan):
        return plan.cost

    def admits(self, plan: Plan) -> bool:
        return plan.makespan <= self.length


Objective = Union[MinMakespan, MinCost, MinCostAtLength]


def min_jumps(wtype: WorkpieceType, order: Optional[Sequence[int]] = None) -> int:
    """Fewest machine changes any single piece of ``wtype`` can make.

    With ``order`` given the step sequence is fixed; otherwise every order
    that keeps the group sequence is considered, via a DP over
    (steps done in the current group, last machine).
    """
    if order is not None:
        table = suffix_jump_table(wtype, order)
        return min(table[0].values()) if table else 0

    best: dict[Optional[int], int] = {None: 0}
    for group in wtype.groups():
        k = len(group)
        full = (1 << k) - 1
        layer: dict[tuple[int, Optional[int]], int] = {(0, m): c for m, c in best.items()}
        for mask in range(full + 1):
            for last in list({lm for (mk, lm) in layer if mk == mask}):
                c0 = layer[(mask, last)]
                for i, step in enumerate(group):
                    if mask >> i & 1:
                        continue
                    for m in step.capable():
                        c = c0 + (last is not None and m != last)
                        key = (mask | 1 << i, m)
                        if c < layer.get(key, math.inf):
                            layer[key] = c
        best = {lm: c for (mk, lm), c in layer.items() if mk == full}
    return min(best.values()) if best else 0


def suffix_jump_table(wtype: WorkpieceType, order: Sequence[int]) -> list[dict[int, int]]:
    """``table[i][m]``: fewest jumps over steps ``order[i:]`` given step i runs on m."""
    steps = [wtype.step(s) for s in order]
    table: list[dict[int, int]] = [dict() for _ in steps]
    for i in range(len(steps) - 1, -1, -1):
        for m in steps[i].capable():
            if i == len(steps) - 1:
                table[i][m] = 0
            else:
                table[i][m] = min(c + (m2 != m) for m2, c in table[i + 1].items())
    return table


def makespan_lower_bound(instance: ProblemInstance) -> int:
    """Longest single-piece work (shortest lengths) vs. total work spread over machines."""
    if not instance.pieces:
        return 0
    works = [sum(s.min_duration() for s in instance.types[p.type_id].steps) for p in instance.pieces]
    return max(max(works), math.ceil(sum(works) / len(instance.machines)))


# ---------------------------------------------------------------- feasibility

@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    pieces: tuple[int, ...] = ()
    machine: Optional[int] = None
    slots: Optional[tuple[int, int]] = None

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


def check_feasibility(plan: Plan, instance: ProblemInstance) -> list[Violation]:
    out: list[Violation] = []
    where: dict[tuple[int, int], Placement] = {}
    piece_ids = {p.piece_id for p in instance.pieces}

    for p in plan.placements:
        key = (p.piece_id, p.step_id)
        if p.piece_id not in piece_ids:
            out.append(Violation("UnknownPiece", f"piece {p.piece_id} not in instance", (p.piece_id,)))
            continue
        wtype = instance.type_of(p.piece_id)
        try:
            spec = wtype.step(p.step_id)
        except KeyError:
            out.append(Violation("UnknownStep", f"piece {p.piece_id} has no step {p.step_id}",
                                 (p.piece_id,)))
            continue
        if key in where:
            out.append(Violation("DuplicatePlacement", f"step {key} placed twice", (p.piece_id,)))
            continue
        where[key] = p
        if p.start < 0:
            out.append(Violation("NegativeStart", f"step {key} starts at {p.start}", (p.piece_id,)))
        d = spec.durations.get(p.machine, 0)
        if p.machine not in instance.machines or d <= 0:
            out.append(Violation("Incapable", f"machine {p.machine} cannot run step {key}",
                                 (p.piece_id,), p.machine))
        elif p.finish != p.start + d:
            out.append(Violation("BadFinish", f"step {key} must finish at {p.start + d}",
                                 (p.piece_id,), p.machine))
        for dn in instance.down:
            if dn.machine == p.machine and dn.overlaps(p.start, p.finish):
                out.append(Violation("MachineDown", f"step {key} runs while machine {p.machine} is down",
                                     (p.piece_id,), p.machine, (dn.start, dn.end)))

    for piece in instance.pieces:
        for s in instance.types[piece.type_id].steps:
            if (piece.piece_id, s.step_id) not in where:
                out.append(Violation("MissingPlacement",
                                     f"step {s.step_id} of piece {piece.piece_id} not placed",
                                     (piece.piece_id,)))

    by_machine: dict[int, list[Placement]] = defaultdict(list)
    for p in where.values():
        by_machine[p.machine].append(p)
    for m in sorted(by_machine):
        ps = sorted(by_machine[m], key=lambda p: (p.start, p.finish, p.piece_id, p.step_id))
        for i, a in enumerate(ps):
            for b in ps[i + 1:]:
                if b.start >= a.finish:
                    break
                lo, hi = max(a.start, b.start), min(a.finish, b.finish)
                out.append(Violation(
                    "MachineOverlap",
                    f"machine {m} runs ({a.piece_id},{a.step_id}) and ({b.piece_id},{b.step_id}) in [{lo},{hi})",
                    (a.piece_id, b.piece_id), m, (lo, hi)))

    for piece in instance.pieces:
        wtype = instance.types[piece.type_id]
        placed = [(s, where[(piece.piece_id, s.step_id)]) for s in wtype.steps
                  if (piece.piece_id, s.step_id) in where]
        for i, (sa, a) in enumerate(placed):
            for sb, b in placed[i + 1:]:
                if sa.order_group < sb.order_group and b.start < a.finish:
                    out.append(Violation(
                        "GroupPrecedence",
                        f"piece {piece.piece_id}: step {sb.step_id} starts at {b.start} "
                        f"before step {sa.step_id} finishes at {a.finish}", (piece.piece_id,)))
                elif sa.order_group > sb.order_group and a.start < b.finish:
                    out.append(Violation(
                        "GroupPrecedence",
                        f"piece {piece.piece_id}: step {sa.step_id} starts at {a.start} "
                        f"before step {sb.step_id} finishes at {b.finish}", (piece.piece_id,)))
                elif sa.order_group == sb.order_group and a.start < b.finish and b.start < a.finish:
                    out.append(Violation(
                        "StepOverlap",
                        f"piece {piece.piece_id}: steps {sa.step_id} and {sb.step_id} overlap",
                        (piece.piece_id,)))

    by_type: dict[str, list[Piece]] = defaultdict(list)
    for piece in instance.pieces:
        by_type[piece.type_id].append(piece)
    for type_id, group in by_type.items():
        for p in group:
            for q in group:
                if p.priority >= q.priority:
                    continue
                for s in instance.types[type_id].steps:
                    a = where.get((p.piece_id, s.step_id))
                    b = where.get((q.piece_id, s.step_id))
                    if a is not None and b is not None and not a.start < b.start:
                        out.append(Violation(
                            "Priority",
                            f"step {s.step_id}: piece {q.piece_id} (priority {q.priority}) starts at "
                            f"{b.start}, not after piece {p.piece_id} (priority {p.priority}) at {a.start}",
                            (p.piece_id, q.piece_id)))
    return out
