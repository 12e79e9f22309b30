"""Seeded random problem instances for fuzzing and benchmarks."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .model import CostModel, Piece, ProblemInstance, StepSpec, WorkpieceType, validate


def random_type(rng: np.random.Generator, type_id: str, machines: tuple[int, ...],
                max_steps: int = 4, max_duration: int = 2, capable_p: float = 0.6) -> WorkpieceType:
    """A type with 1..``max_steps`` steps in non-decreasing order groups."""
    n = int(rng.integers(1, max_steps + 1))
    group = 1
    steps = []
    for sid in range(1, n + 1):
        if sid > 1 and rng.random() < 0.5:
            group += 1
        durations = {m: int(rng.integers(1, max_duration + 1)) if rng.random() < capable_p else 0
                     for m in machines}
        if not any(durations.values()):
            durations[machines[int(rng.integers(len(machines)))]] = int(rng.integers(1, max_duration + 1))
        steps.append(StepSpec(sid, group, durations))
    return WorkpieceType(type_id, tuple(steps))


def random_instance(rng: np.random.Generator, max_pieces: int = 3, max_steps: int = 4,
                    max_machines: int = 3, max_duration: int = 2, max_types: int = 2,
                    horizon: Optional[int] = None) -> ProblemInstance:
    """An instance sized to the given caps.

    With the default caps the serial work of all pieces is at most 24
    slots, so every instance fits the oracle's default horizon.
    """
    machines = tuple(range(1, int(rng.integers(1, max_machines + 1)) + 1))
    n_types = int(rng.integers(1, max_types + 1))
    types = {}
    for k in range(n_types):
        tid = chr(ord("A") + k)
        types[tid] = random_type(rng, tid, machines, max_steps, max_duration)
    pieces = []
    for pid in range(1, int(rng.integers(1, max_pieces + 1)) + 1):
        tid = chr(ord("A") + int(rng.integers(n_types)))
        pieces.append(Piece(pid, tid, int(rng.integers(1, 4))))
    used = {p.type_id for p in pieces}
    types = {t: wt for t, wt in types.items() if t in used}
    return validate(ProblemInstance(machines, types, tuple(pieces), CostModel.default(machines),
                                    horizon_hint=horizon))


def instances(seed: int, count: int, **caps) -> list[ProblemInstance]:
    rng = np.random.default_rng(seed)
    return [random_instance(rng, **caps) for _ in range(count)]
