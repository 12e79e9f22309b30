"""Exhaustive branch-and-bound reference solver for small instances.

The search builds a plan one placement at a time in canonical order:
every new placement has a strictly larger (start, machine) pair than the
previous one. Each plan is therefore generated exactly once, and the
readiness rules below only ever need to look at placements already made.
Children are tried in (start, machine, piece, step) order, so the first
optimal plan found is the lexicographically smallest one.

This module deliberately shares nothing with the agent network code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .errors import Infeasible, LimitExceeded
from .model import MinCostAtLength, MinMakespan, Objective, Placement, Plan, ProblemInstance


@dataclass(frozen=True)
class OracleLimits:
    max_pieces: int = 3
    max_steps: int = 4
    max_machines: int = 3
    max_horizon: int = 24
    max_states: int = 10 ** 7

    def __post_init__(self):
        for name in ("max_pieces", "max_steps", "max_machines", "max_horizon", "max_states"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class OracleResult:
    plan: Plan
    value: object
    states: int


@dataclass
class _Item:
    piece: int
    step: int
    type_id: str
    priority: int
    group: int
    durations: tuple[tuple[int, int], ...]  # (machine, slots), capable only
    min_work: int
    min_rate_cost: Fraction


def _check_limits(instance: ProblemInstance, limits: OracleLimits) -> None:
    if len(instance.pieces) > limits.max_pieces:
        raise LimitExceeded(f"{len(instance.pieces)} pieces > {limits.max_pieces}")
    if len(instance.machines) > limits.max_machines:
        raise LimitExceeded(f"{len(instance.machines)} machines > {limits.max_machines}")
    for p in instance.pieces:
        n = len(instance.types[p.type_id].steps)
        if n > limits.max_steps:
            raise LimitExceeded(f"piece {p.piece_id} has {n} steps > {limits.max_steps}")
    if instance.horizon_hint is not None and instance.horizon_hint > limits.max_horizon:
        raise LimitExceeded(f"horizon {instance.horizon_hint} > {limits.max_horizon}")


class _Search:
    def __init__(self, instance: ProblemInstance, objective: Objective, limits: OracleLimits):
        self.instance = instance
        self.objective = objective
        self.limits = limits
        self.horizon = instance.horizon_hint or limits.max_horizon
        if isinstance(objective, MinCostAtLength):
            self.horizon = min(self.horizon, objective.length)
        self.makespan_only = isinstance(objective, MinMakespan)
        self.cost = instance.cost
        self.items: list[_Item] = []
        for p in sorted(instance.pieces, key=lambda p: p.piece_id):
            for s in instance.types[p.type_id].steps:
                durs = tuple((m, d) for m, d in sorted(s.durations.items()) if d > 0)
                self.items.append(_Item(
                    p.piece_id, s.step_id, p.type_id, p.priority, s.order_group, durs,
                    min(d for _, d in durs),
                    min(self.cost.rate(m) * d for m, d in durs)))
        self.n = len(self.items)
        self.down = {m: sorted((d.start, d.end) for d in instance.down if d.machine == m)
                     for m in instance.machines}
        # steps a given item must wait for: earlier groups of its piece and
        # the same step of every higher-priority piece of its type
        self.waits: list[list[int]] = []
        self.later: list[list[int]] = []
        for i, a in enumerate(self.items):
            waits, later = [], []
            for j, b in enumerate(self.items):
                if b.piece == a.piece:
                    if b.group < a.group:
                        waits.append(j)
                    elif b.group > a.group:
                        later.append(j)
                elif (b.type_id == a.type_id and b.step == a.step and b.priority < a.priority):
                    waits.append(j)
            self.waits.append(waits)
            self.later.append(later)
        self.peers = [[j for j in self.waits[i] if self.items[j].piece != self.items[i].piece]
                      for i in range(self.n)]
        self.pieces = sorted({it.piece for it in self.items})
        self.states = 0
        self.best_value = None
        self.best: Optional[list[Placement]] = None

    # -- bookkeeping

    def _down_end(self, m: int, start: int, finish: int) -> Optional[int]:
        for a, b in self.down[m]:
            if a < finish and start < b:
                return b
        return None

    def _value(self, placements: list[Placement]):
        plan = Plan.build(placements, self.instance)
        if not self.objective.admits(plan):
            return None, plan
        return self.objective.value(plan), plan

    def _makespan_bound(self, remaining, piece_ready, machine_free, last_start, makespan) -> int:
        # remaining steps all start at or after last_start; machine m only
        # has room from max(last_start, its free slot) onward
        t = max(last_start, 0)
        work = sum(it.min_work for it in remaining)
        busy = sum(max(t, f) for f in machine_free.values())
        lb = max(makespan, math.ceil((work + busy) / len(machine_free)))
        per_piece: dict[int, int] = {}
        for it in remaining:
            per_piece[it.piece] = per_piece.get(it.piece, 0) + it.min_work
        for pid, w in per_piece.items():
            lb = max(lb, max(t, piece_ready[pid]) + w)
        return lb

    def _bound(self, placed, piece_ready, piece_last, machine_free, last_start, makespan, cost_so_far):
        remaining = [it for i, it in enumerate(self.items) if placed[i] is None]
        if self.makespan_only:
            return self._makespan_bound(remaining, piece_ready, machine_free, last_start, makespan)
        if isinstance(self.objective, MinCostAtLength):
            if self._makespan_bound(remaining, piece_ready, machine_free, last_start, makespan) > self.objective.length:
                return None
        lb = cost_so_far + sum((it.min_rate_cost for it in remaining), Fraction(0))
        # every unfinished piece waits at least until the current start slot,
        # and jumps if none of its remaining steps can stay on its machine
        open_pieces: dict[int, list[_Item]] = {}
        for it in remaining:
            open_pieces.setdefault(it.piece, []).append(it)
        for pid, items in open_pieces.items():
            prev = piece_last[pid]
            if prev is None:
                continue
            lb += self.cost.storage_cost * max(0, last_start - prev.finish)
            if all(prev.machine not in dict(it.durations) for it in items):
                lb += self.cost.jump_cost
        return lb

    # -- search

    def _starts(self, m: int, d: int, ready: int, lo: int) -> list[int]:
        """Starts to try on machine ``m`` for a step that may begin at ``ready``.

        For makespan, some optimal plan is left-justified: no step can move
        one slot earlier. Such a step starts at ``ready`` itself or right
        where a down interval of its machine ends.
        """
        hi = self.horizon - d
        if not self.makespan_only:
            return list(range(max(lo, ready), hi + 1))
        events = {ready} | {b for _, b in self.down[m] if b > ready}
        return sorted(t for t in events if lo <= t <= hi)

    def run(self) -> None:
        placed: list[Optional[Placement]] = [None] * self.n
        piece_ready = {pid: 0 for pid in self.pieces}
        piece_last: dict[int, Optional[Placement]] = {pid: None for pid in self.pieces}
        machine_free = {m: 0 for m in self.instance.machines}
        self._dfs(placed, piece_ready, piece_last, machine_free, (-1, -1), 0, Fraction(0), 0)

    def _dfs(self, placed, piece_ready, piece_last, machine_free, last_key, makespan, cost_so_far, count):
        self.states += 1
        if self.states > self.limits.max_states:
            raise LimitExceeded(f"more than {self.limits.max_states} states expanded")
        if count == self.n:
            value, plan = self._value([p for p in placed if p is not None])
            if value is not None and (self.best_value is None or value < self.best_value):
                self.best_value, self.best = value, list(plan.placements)
            return
        lb = self._bound(placed, piece_ready, piece_last, machine_free, last_key[0], makespan, cost_so_far)
        if lb is None or (self.best_value is not None and lb >= self.best_value):
            return
        children = []
        for i, it in enumerate(self.items):
            if placed[i] is not None:
                continue
            if any(placed[j] is None for j in self.waits[i]):
                continue
            if any(placed[j] is not None for j in self.later[i]):
                continue
            lo_piece = piece_ready[it.piece]
            for j in self.peers[i]:
                lo_piece = max(lo_piece, placed[j].start + 1)
            for m, d in it.durations:
                ready = max(lo_piece, machine_free[m])
                lo = last_key[0] + (m <= last_key[1])
                for t in self._starts(m, d, ready, lo):
                    if self._down_end(m, t, t + d) is None:
                        children.append((t, m, it.piece, it.step, i, d))
        children.sort()
        for t, m, pid, sid, i, d in children:
            p = Placement(pid, sid, m, t, t + d)
            prev = piece_last[pid]
            add = 0 if self.makespan_only else self.cost.rate(m) * d
            if prev is not None and not self.makespan_only:
                if prev.machine != m:
                    add += self.cost.jump_cost
                add += self.cost.storage_cost * (t - prev.finish)
            saved = (piece_ready[pid], piece_last[pid], machine_free[m])
            placed[i] = p
            piece_ready[pid] = t + d
            piece_last[pid] = p
            machine_free[m] = t + d
            self._dfs(placed, piece_ready, piece_last, machine_free, (t, m),
                      max(makespan, t + d), cost_so_far + add, count + 1)
            placed[i] = None
            piece_ready[pid], piece_last[pid], machine_free[m] = saved


def brute_force(instance: ProblemInstance, objective: Optional[Objective] = None,
                limits: Optional[OracleLimits] = None) -> OracleResult:
    """Provably optimal plan for ``objective`` (default: shortest makespan)."""
    objective = objective or MinMakespan()
    limits = limits or OracleLimits()
    _check_limits(instance, limits)
    search = _Search(instance, objective, limits)
    search.run()
    if search.best is None:
        raise Infeasible(f"no plan fits within horizon {search.horizon}")
    plan = Plan.build(search.best, instance)
    return OracleResult(plan, search.best_value, search.states)
