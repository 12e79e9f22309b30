"""Command-line entry point: ``agentplan <command> ...``.

Exit codes: 0 success, 1 no plan exists under the given constraints,
2 invalid input. Errors are reported on stderr as ``<ErrorName>: <message>``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

from . import aco_opt, csp_agents, gantt, oracle
from .errors import (
    AgentPlanError,
    FuelExhausted,
    HorizonExhausted,
    Infeasible,
    ProblemSyntaxError,
    SemanticError,
)
from .model import (
    MinCost,
    MinCostAtLength,
    MinMakespan,
    Piece,
    Plan,
    ProblemInstance,
    parse_problem,
    serialize_plan,
)

EXIT_OK, EXIT_INFEASIBLE, EXIT_INVALID = 0, 1, 2
INFEASIBLE_ERRORS = (Infeasible, HorizonExhausted, FuelExhausted)


@dataclass
class RunConfig:
    command: str
    inputs: list[str]
    out: Optional[str] = None
    gantt: Optional[str] = None
    seed: int = 0
    horizon: Optional[int] = None
    pieces: list[str] = field(default_factory=list)
    objective: str = "makespan"
    length: Optional[int] = None
    aco: dict = field(default_factory=dict)  # AcoParams overrides
    history: Optional[str] = None
    before: Optional[str] = None
    depths: tuple[int, ...] = (0, 1, 2)

    @property
    def render(self) -> str:
        if self.gantt is None:
            return "none"
        return "svg" if self.gantt.endswith(".svg") else "text"


class InputError(AgentPlanError):
    """Bad command-line arguments or unreadable files."""


# ---------------------------------------------------------------- helpers

def _read(path: str) -> str:
    """File contents; a bare name like ``tableA.problem`` falls back to the bundled fixtures."""
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        if os.sep not in path:
            bundled = resources.files("agentplan.data") / path
            if bundled.is_file():
                return bundled.read_text(encoding="utf-8")
        raise InputError(f"{path}: no such file") from None
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None


def _write(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None


def _load(cfg: RunConfig) -> ProblemInstance:
    instance = parse_problem(_read(cfg.inputs[0]))
    if cfg.pieces:
        instance = instance.replace(pieces=_pieces(cfg.pieces, instance))
    if cfg.horizon is not None:
        if cfg.horizon < 1:
            raise InputError("--horizon must be positive")
        instance = instance.replace(horizon_hint=cfg.horizon)
    return instance


def _pieces(specs: Sequence[str], instance: ProblemInstance) -> tuple[Piece, ...]:
    """``TYPE=COUNT`` items; ids and priorities run 1, 2, ... in order given."""
    out = []
    for spec in specs:
        type_id, sep, count = spec.partition("=")
        if not sep or not count.isdigit():
            raise InputError(f"--pieces expects TYPE=COUNT, got {spec!r}")
        if type_id not in instance.types:
            raise SemanticError([(f"--pieces {spec}", f"unknown type {type_id!r}")])
        for _ in range(int(count)):
            n = len(out) + 1
            out.append(Piece(n, type_id, n))
    return tuple(out)


def _objective(cfg: RunConfig):
    if cfg.objective == "makespan":
        return MinMakespan()
    if cfg.objective == "cost":
        return MinCost()
    if cfg.length is None:
        raise InputError("--objective cost-at-length needs --length")
    return MinCostAtLength(cfg.length)


def _logger():
    mode = os.environ.get("AGENTPLAN_LOG", "off")
    if mode not in ("msg", "fire", "off"):
        raise InputError(f"AGENTPLAN_LOG must be msg, fire or off, not {mode!r}")

    def emit(item):
        print(item.line(), file=sys.stderr)

    return (emit if mode == "msg" else None), (emit if mode == "fire" else None)


def _emit_plan(cfg: RunConfig, plan: Plan, instance: ProblemInstance) -> None:
    _write(cfg.out, serialize_plan(plan))
    if cfg.out is not None:
        print(f"makespan={plan.makespan} jumps={plan.jumps} cost={float(plan.cost)}")
    if cfg.render == "svg":
        _write(cfg.gantt, gantt.render_svg(plan, instance))
    elif cfg.render == "text":
        _write(cfg.gantt, gantt.render_text(plan, instance))


# ---------------------------------------------------------------- commands

def cmd_validate(cfg: RunConfig) -> int:
    _load(cfg)
    print(f"{cfg.inputs[0]}: ok")
    return EXIT_OK


def cmd_plan(cfg: RunConfig) -> int:
    instance = _load(cfg)
    msg, fire = _logger()
    plan = csp_agents.solve_csp(instance, seed=cfg.seed, log=msg, on_fire=fire)
    _emit_plan(cfg, plan, instance)
    return EXIT_OK


def _params(cfg: RunConfig) -> aco_opt.AcoParams:
    try:
        return aco_opt.AcoParams(seed=cfg.seed, **cfg.aco)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def cmd_optimize(cfg: RunConfig) -> int:
    instance = _load(cfg)
    result = aco_opt.aco_optimize(instance, _objective(cfg), _params(cfg))
    _emit_plan(cfg, result.best, instance)
    if cfg.history is not None:
        _write(cfg.history, aco_opt.history_csv(result.history))
    return EXIT_OK


def cmd_oracle(cfg: RunConfig) -> int:
    instance = _load(cfg)
    result = oracle.brute_force(instance, _objective(cfg))
    _emit_plan(cfg, result.plan, instance)
    return EXIT_OK


def parse_scenario(text: str) -> list[csp_agents.Event]:
    """A JSON list of events (or ``{"events": [...]}``)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemSyntaxError(exc.msg, exc.lineno) from None
    if isinstance(doc, dict):
        doc = doc.get("events")
    if not isinstance(doc, list):
        raise SemanticError([("events", "expected a list of events")])
    events, issues = [], []
    for i, ev in enumerate(doc):
        kind = ev.get("event") if isinstance(ev, dict) else None
        try:
            if kind == "machine_down":
                start, end = int(ev["from"]), int(ev["to"])
                if not 0 <= start < end:
                    issues.append((f"events[{i}]", "need 0 <= from < to"))
                    continue
                events.append(csp_agents.MachineDown(int(ev["machine"]), start, end))
            elif kind == "capability_change":
                events.append(csp_agents.CapabilityChange(
                    str(ev["type"]), int(ev["step"]), int(ev["machine"]), int(ev["duration"])))
            elif kind == "new_piece":
                events.append(csp_agents.NewPiece(
                    Piece(int(ev["id"]), str(ev["type"]), int(ev.get("priority", 1)))))
            else:
                issues.append((f"events[{i}].event", f"unknown event {kind!r}"))
        except (KeyError, TypeError, ValueError):
            issues.append((f"events[{i}]", "missing or malformed field"))
    if issues:
        raise SemanticError(issues)
    return events


def cmd_disturb(cfg: RunConfig) -> int:
    if len(cfg.inputs) != 2:
        raise InputError("disturb needs PROBLEM and SCENARIO")
    instance = _load(cfg)
    events = parse_scenario(_read(cfg.inputs[1]))
    msg, fire = _logger()
    algo = csp_agents.PrimaryAlgorithm(instance, log=msg, on_fire=fire)
    before = algo.solve()
    after = before
    for event in events:
        csp_agents.apply_disturbance(algo, event)
        after = algo.propagate()
    if cfg.before is not None:
        _write(cfg.before, serialize_plan(before))
    _emit_plan(cfg, after, algo.instance)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    instance = _load(cfg)
    rows = aco_opt.sweep_jumps(instance, cfg.depths, _params(cfg))
    _write(cfg.out, aco_opt.sweep_csv(rows))
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "plan": cmd_plan,
    "optimize": cmd_optimize,
    "oracle": cmd_oracle,
    "disturb": cmd_disturb,
    "sweep": cmd_sweep,
}


# ---------------------------------------------------------------- argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _depths(text: str) -> tuple[int, ...]:
    try:
        depths = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad depth list {text!r}") from None
    if not depths or min(depths) < 0:
        raise argparse.ArgumentTypeError("depths must be non-negative integers")
    return depths


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="agentplan", description="Agent-based manufacturing plans.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def common(p):
        p.add_argument("problem")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out")
        p.add_argument("--gantt", help="write a Gantt chart (.svg, otherwise text)")
        p.add_argument("--horizon", type=int)
        p.add_argument("--pieces", nargs="+", default=[], metavar="TYPE=COUNT")

    def aco(p):
        p.add_argument("--iterations", type=int)
        p.add_argument("--ants", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--rho", type=float)
        p.add_argument("--pool", type=int, dest="pool_size")

    def objective(p):
        p.add_argument("--objective", choices=("makespan", "cost", "cost-at-length"), default="makespan")
        p.add_argument("--length", type=int)

    common(sub.add_parser("validate"))
    common(sub.add_parser("plan"))
    p = sub.add_parser("optimize")
    common(p)
    aco(p)
    objective(p)
    p.add_argument("--forecast", type=int)
    p.add_argument("--history", help="write iteration,best_objective CSV")
    p = sub.add_parser("oracle")
    common(p)
    objective(p)
    p = sub.add_parser("disturb")
    common(p)
    p.add_argument("scenario")
    p.add_argument("--before", help="write the plan before the events")
    p = sub.add_parser("sweep")
    common(p)
    aco(p)
    p.add_argument("--forecast-depths", type=_depths, default=(0, 1, 2))
    return parser


def config_from_args(argv: Sequence[str]) -> RunConfig:
    ns = build_parser().parse_args(argv)
    inputs = [ns.problem] + ([ns.scenario] if getattr(ns, "scenario", None) else [])
    overrides = {}
    for name in ("iterations", "ants", "alpha", "beta", "rho", "pool_size", "forecast"):
        value = getattr(ns, name, None)
        if value is not None:
            overrides[name] = value
    return RunConfig(
        command=ns.command, inputs=inputs, out=ns.out, gantt=ns.gantt, seed=ns.seed,
        horizon=ns.horizon, pieces=ns.pieces, objective=getattr(ns, "objective", "makespan"),
        length=getattr(ns, "length", None), aco=overrides,
        history=getattr(ns, "history", None), before=getattr(ns, "before", None),
        depths=getattr(ns, "forecast_depths", (0, 1, 2)),
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        cfg = config_from_args(argv)
        return COMMANDS[cfg.command](cfg)
    except (*INFEASIBLE_ERRORS, RuntimeError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SemanticError as exc:
        print(f"{type(exc).__name__}:", file=sys.stderr)
        for path, message in exc.issues:
            print(f"  {path}: {message}", file=sys.stderr)
        return EXIT_INVALID
    except AgentPlanError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


def run() -> None:
    sys.exit(main())


__all__ = ["RunConfig", "main", "build_parser", "config_from_args", "parse_scenario"]
