"""Guarded, payload-carrying Petri nets that drive the planning roles.

A transition is bound to one role. When its input places are marked, the
role is executed on the token payload; the transition fires if its guard
accepts the role outcome. The two bundled nets are 1-safe and
conflict-free, so at most one transition is ever enabled.

Parameterization net (roles γ0..γ2)::

    p0 --t0[γ0 ok]--> p1 --t1[γ1 ok]--> p2 --t2[γ2 ok, node left]--> p2
                                         p2 --t3[γ2 ok, none left]--> p2 (done)

Propagation net (roles γ3..γ7)::

    p3 --t4[γ3 ok]--> p4 --t5[γ4 ok]--> p5 --t7[γ5 ok]---> p6
                                         p5 --t6[γ5 fail]-> p6
    p6 --t9[γ6 fail]--> p7 --t8[γ7 ok]--> p3
    (γ6 ok leaves the token in p6: the plan is consistent)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Callable, Mapping, Optional

from .errors import FuelExhausted, NondeterministicMarking

Payload = Mapping[str, Any]


@dataclass(frozen=True)
class Outcome:
    ok: bool
    payload: Payload = MappingProxyType({})


OK = Outcome(True)
FAIL = Outcome(False)


@dataclass(frozen=True)
class Token:
    payload: Payload = MappingProxyType({})


@dataclass
class Place:
    id: str
    tokens: list[Token] = field(default_factory=list)


def _always(payload: Payload) -> bool:
    return True


def _merge(outcome: Outcome, payload: Payload) -> dict:
    out = dict(payload)
    out.update(outcome.payload)
    return out


@dataclass(frozen=True)
class Transition:
    id: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    role: str
    guard: Callable[[Outcome, Payload], bool]
    ready: Callable[[Payload], bool] = _always  # payload-only precondition
    produce: Callable[[Outcome, Payload], dict] = _merge

    def __post_init__(self):
        if not self.inputs or not self.outputs:
            raise ValueError(f"transition {self.id} needs inputs and outputs")


@dataclass(frozen=True)
class Firing:
    transition: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    role: str
    ok: bool
    consumed: tuple[Payload, ...]
    produced: Payload

    def line(self) -> str:
        payload = ",".join(f"{k}={self.produced[k]}" for k in sorted(self.produced))
        return (f"FIRE {self.transition} {','.join(self.inputs)}->{','.join(self.outputs)} "
                f"role={self.role} outcome={'ok' if self.ok else 'fail'} payload={payload}")


@dataclass
class Trace:
    firings: list[Firing] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.firings)

    def __iter__(self):
        return iter(self.firings)

    def ids(self) -> list[str]:
        return [f.transition for f in self.firings]

    def dump(self) -> str:
        return "".join(f.line() + "\n" for f in self.firings)

    def replay(self, net: "PetriNet") -> dict[str, list[Payload]]:
        """Re-apply every firing to ``net`` and return its final marking."""
        for f in self.firings:
            for pid in f.inputs:
                if not net.places[pid].tokens:
                    raise ValueError(f"replay of {f.transition}: place {pid} is empty")
                net.places[pid].tokens.pop(0)
            for pid in f.outputs:
                net.places[pid].tokens.append(Token(MappingProxyType(dict(f.produced))))
        return net.marking()


class PetriNet:
    def __init__(self, places, transitions, payload_keys=(), initial=None):
        self.places: dict[str, Place] = {p: Place(p) for p in places}
        self.transitions: list[Transition] = list(transitions)
        self.payload_keys = frozenset(payload_keys)
        ids = [t.id for t in self.transitions]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate transition ids")
        self._consumers: dict[str, list[Transition]] = {p: [] for p in self.places}
        for t in self.transitions:
            for pid in t.inputs + t.outputs:
                if pid not in self.places:
                    raise ValueError(f"transition {t.id} references unknown place {pid}")
            self._consumers[t.inputs[0]].append(t)
        for pid, payload in (initial or {}).items():
            self.put(pid, payload)

    def put(self, place: str, payload: Optional[Payload] = None) -> None:
        payload = dict(payload or {})
        unknown = set(payload) - self.payload_keys
        if unknown:
            raise ValueError(f"undeclared payload keys {sorted(unknown)}")
        self.places[place].tokens.append(Token(MappingProxyType(payload)))

    def marking(self) -> dict[str, list[Payload]]:
        return {pid: [dict(t.payload) for t in p.tokens] for pid, p in self.places.items()}

    def marked(self) -> list[str]:
        return [pid for pid, p in self.places.items() if p.tokens]

    def transition(self, tid: str) -> Transition:
        for t in self.transitions:
            if t.id == tid:
                return t
        raise KeyError(tid)

    def _input_payload(self, t: Transition) -> Payload:
        if len(t.inputs) == 1:
            return self.places[t.inputs[0]].tokens[0].payload
        merged: dict = {}
        for pid in t.inputs:
            merged.update(self.places[pid].tokens[0].payload)
        return merged

    def candidates(self) -> list[Transition]:
        """Transitions whose inputs are all marked and whose payload precondition holds."""
        out = []
        for pid, place in self.places.items():
            if not place.tokens:
                continue
            for t in self._consumers[pid]:
                if all(self.places[i].tokens for i in t.inputs) and t.ready(self._input_payload(t)):
                    out.append(t)
        return out

    def enabled(self, role_outcomes: Mapping[str, Outcome]) -> list[Transition]:
        out = []
        for t in self.candidates():
            outcome = role_outcomes.get(t.role)
            if outcome is not None and t.guard(outcome, self._input_payload(t)):
                out.append(t)
        return out

    def max_tokens(self) -> int:
        return max((len(p.tokens) for p in self.places.values()), default=0)


def _fire(net: PetriNet, t: Transition, outcome: Outcome) -> Firing:
    consumed = tuple(net.places[pid].tokens[0].payload for pid in t.inputs)
    payload = net._input_payload(t)
    for pid in t.inputs:
        net.places[pid].tokens.pop(0)
    produced = t.produce(outcome, payload)
    for pid in t.outputs:
        net.put(pid, produced)
    return Firing(t.id, t.inputs, t.outputs, t.role, outcome.ok,
                  consumed, MappingProxyType(dict(produced)))


def _select(enabled: list[Transition]) -> Optional[Transition]:
    if not enabled:
        return None
    if len(enabled) > 1:
        raise NondeterministicMarking(
            f"transitions {[t.id for t in enabled]} enabled at once")
    return enabled[0]


def step(net: PetriNet, role_outcomes: Mapping[str, Outcome]) -> Optional[Firing]:
    """Fire the single enabled transition, or return None when none is enabled."""
    t = _select(net.enabled(role_outcomes))
    return None if t is None else _fire(net, t, role_outcomes[t.role])


Executor = Callable[[str, Payload], Outcome]


def run(net: PetriNet, executor: Executor, fuel: int,
        on_fire: Optional[Callable[[Firing], None]] = None) -> Trace:
    """Step ``net`` until it halts, executing bound roles through ``executor``.

    Raises FuelExhausted if a transition is still enabled after ``fuel``
    firings.
    """
    if fuel <= 0:
        raise ValueError("fuel must be positive")
    trace = Trace()
    while True:
        cands = net.candidates()
        if not cands:
            return trace
        outcomes: dict[str, Outcome] = {}
        for t in cands:
            if t.role not in outcomes:
                outcomes[t.role] = executor(t.role, net._input_payload(t))
        enabled = [t for t in cands if t.guard(outcomes[t.role], net._input_payload(t))]
        if len(trace) >= fuel:
            if enabled:
                raise FuelExhausted(f"no halt after {fuel} firings")
            return trace
        t = _select(enabled)
        if t is None:
            return trace
        firing = _fire(net, t, outcomes[t.role])
        for pid in t.outputs:
            if len(net.places[pid].tokens) > 1:
                raise NondeterministicMarking(f"{t.id} left a place with >1 token")
        trace.firings.append(firing)
        if on_fire is not None:
            on_fire(firing)


def _ok(o: Outcome, p: Payload) -> bool:
    return o.ok


def _fail(o: Outcome, p: Payload) -> bool:
    return not o.ok


def build_parameterization_net() -> PetriNet:
    def not_done(p):
        return not p.get("done", 0)

    def start_connecting(o, p):
        out = _merge(o, p)
        out.update(connected=0, done=0)
        return out

    def finish(o, p):
        out = dict(p)
        out["done"] = 1
        return out

    transitions = [
        Transition("t0", ("p0",), ("p1",), "γ0", _ok),
        Transition("t1", ("p1",), ("p2",), "γ1", _ok, produce=start_connecting),
        Transition("t2", ("p2",), ("p2",), "γ2",
                   lambda o, p: o.ok and p["connected"] < p["n"], ready=not_done),
        Transition("t3", ("p2",), ("p2",), "γ2",
                   lambda o, p: o.ok and p["connected"] >= p["n"], ready=not_done, produce=finish),
    ]
    return PetriNet(["p0", "p1", "p2"], transitions,
                    payload_keys={"n", "connected", "done"}, initial={"p0": {}})


def build_propagation_net() -> PetriNet:
    transitions = [
        Transition("t4", ("p3",), ("p4",), "γ3", _ok),
        Transition("t5", ("p4",), ("p5",), "γ4", _ok),
        Transition("t6", ("p5",), ("p6",), "γ5", _fail),
        Transition("t7", ("p5",), ("p6",), "γ5", _ok),
        Transition("t9", ("p6",), ("p7",), "γ6", _fail),
        Transition("t8", ("p7",), ("p3",), "γ7", _ok),
    ]
    return PetriNet(["p3", "p4", "p5", "p6", "p7"], transitions,
                    payload_keys={"round", "horizon", "empty", "conflicts", "attempt"},
                    initial={"p3": {}})


def build_primary_nets() -> tuple[PetriNet, PetriNet]:
    return build_parameterization_net(), build_propagation_net()
