"""Working-step agents forming the constraint network.

Every (piece, working step) pair is a node. Nodes of one piece form a
chain in group order; each node takes the finish slot of its predecessor,
reserves the earliest free machine slot after it and hands its own finish
on. A node that finds nothing asks its predecessor for another position.
Cross-piece rules (machine exclusivity, production priority) are checked
globally once every chain is placed, and empty value sets trigger a
widening of the search window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator, Mapping, NamedTuple, Optional, Protocol, Sequence, Union

from .errors import HorizonExhausted, UnknownMachine, UnknownType
from .model import (
    DownInterval,
    Piece,
    Placement,
    Plan,
    ProblemInstance,
    StepSpec,
    WorkpieceType,
    validate,
)
from .protocol import FAIL, OK, Outcome, Trace, build_parameterization_net, build_propagation_net, run

MAX_ENLARGEMENTS = 10


class NodeId(NamedTuple):
    piece_id: int
    step_id: int

    def __str__(self) -> str:
        return f"P{self.piece_id}.WS{self.step_id}"


class Status(str, Enum):
    IDLE = "idle"
    PROPAGATED = "propagated"
    CONFLICTED = "conflicted"
    PLACED = "placed"


Candidate = tuple[int, int, int]  # (start, machine, delay past the machine's earliest slot)


@dataclass
class NodeState:
    id: NodeId
    spec: StepSpec
    type_id: str
    priority: int
    position: int = 0
    predecessor: Optional[NodeId] = None
    successor: Optional[NodeId] = None
    placement: Optional[Placement] = None
    status: Status = Status.IDLE
    floor: int = 0          # lower bound on the start set by global pruning
    lower: int = 0          # lower bound used in the last propagation
    exhausted: bool = False
    delay: int = 0
    requests: int = 0
    candidates: Optional[Iterator[Candidate]] = field(default=None, repr=False)

    @property
    def role(self) -> str:
        if self.predecessor is None:
            return "γ3"
        if self.successor is None:
            return "γ5"
        return "γ4"


@dataclass(frozen=True)
class PropagationMessage:
    variant: str  # Propagate | RequestAlternative | GlobalCheck | Enlarge
    sender: str
    receiver: str
    payload: str = ""

    def line(self) -> str:
        return f"MSG {self.variant} {self.sender}→{self.receiver} {self.payload}".rstrip()


class MachineCalendar:
    """Reserved intervals of one machine plus its down intervals."""

    def __init__(self, machine: int):
        self.machine = machine
        self.mask = 0
        self.reserved: dict[int, tuple[int, NodeId]] = {}
        self.down: list[tuple[int, int]] = []

    def is_free(self, start: int, finish: int) -> bool:
        if (self.mask >> start) & ((1 << (finish - start)) - 1):
            return False
        for a, b in self.down:
            if a < finish and start < b:
                return False
        return True

    def reserve(self, start: int, finish: int, node: NodeId) -> None:
        if not self.is_free(start, finish):
            raise RuntimeError(f"machine {self.machine} busy in [{start},{finish})")
        self.mask |= ((1 << (finish - start)) - 1) << start
        self.reserved[start] = (finish, node)

    def release(self, start: int) -> None:
        finish, _ = self.reserved.pop(start)
        self.mask &= ~(((1 << (finish - start)) - 1) << start)

    def intervals(self) -> list[tuple[int, int, NodeId]]:
        return sorted((s, f, n) for s, (f, n) in self.reserved.items())


class Chooser(Protocol):
    def candidates(self, net: "ConstraintNetwork", node: NodeState, lower: int) -> Iterator[Candidate]:
        ...


class GreedyChooser:
    """Earliest start first, then lowest machine id."""

    def candidates(self, net, node, lower):
        return net.scan(node, lower)


GREEDY = GreedyChooser()


class ConstraintNetwork:
    def __init__(self, instance: ProblemInstance, orders: Optional[Mapping[str, Sequence[int]]] = None,
                 horizon: Optional[int] = None, log: Optional[Callable[[PropagationMessage], None]] = None):
        self.instance = instance
        self.orders = {t: tuple(wt.listed_order()) for t, wt in instance.types.items()}
        if orders:
            for t, order in orders.items():
                self.orders[t] = tuple(order)
        self.horizon = horizon or instance.horizon_hint or instance.default_horizon()
        self.horizon_history = [self.horizon]
        self.attempts = 0
        self.log = log
        self.nodes: dict[NodeId, NodeState] = {}
        self.chains: dict[int, list[NodeId]] = {}
        self.calendars = {m: MachineCalendar(m) for m in instance.machines}
        for d in instance.down:
            self.calendars[d.machine].down.append((d.start, d.end))
        self.dirty = False

    # -- construction (roles γ0..γ2)

    def node_count(self) -> int:
        return self.instance.node_count()

    def chain_order(self) -> list[Piece]:
        return sorted(self.instance.pieces, key=lambda p: (p.priority, p.piece_id))

    def linear_order(self) -> list[NodeId]:
        return [NodeId(p.piece_id, s) for p in self.chain_order() for s in self.orders[p.type_id]]

    def init_nodes(self) -> None:
        for piece in self.chain_order():
            self._init_chain(piece)
        self._linear = self.linear_order()

    def _init_chain(self, piece: Piece) -> None:
        wtype = self.instance.types[piece.type_id]
        order = self.orders[piece.type_id]
        self.chains[piece.piece_id] = []
        for pos, sid in enumerate(order):
            nid = NodeId(piece.piece_id, sid)
            self.nodes[nid] = NodeState(nid, wtype.step(sid), piece.type_id, piece.priority, pos)

    def pieces_by_type(self) -> dict[str, list[Piece]]:
        out: dict[str, list[Piece]] = {}
        for piece in self.instance.pieces:
            out.setdefault(piece.type_id, []).append(piece)
        return out

    def priority_pairs(self) -> list[tuple[int, int, list[tuple[NodeId, NodeId]]]]:
        """(lower piece, higher piece, [(its step node, peer step node)]) for same-type pieces."""
        key = self.instance.pieces  # orders are fixed once the network exists
        if getattr(self, "_pairs_key", None) is not key:
            pairs = []
            for type_id, pieces in self.pieces_by_type().items():
                for q in pieces:
                    for p in pieces:
                        if p.priority < q.priority:
                            pairs.append((q.piece_id, p.piece_id,
                                          [(NodeId(q.piece_id, sid), NodeId(p.piece_id, sid))
                                           for sid in self.orders[type_id]]))
            self._pairs_key, self._pairs = key, pairs
        return self._pairs

    def connect(self, index: int) -> NodeId:
        """Link the ``index``-th node (in linear order) to its chain predecessor."""
        nid = self._linear[index]
        chain = self.chains[nid.piece_id]
        node = self.nodes[nid]
        if chain:
            prev = self.nodes[chain[-1]]
            prev.successor = nid
            node.predecessor = prev.id
        chain.append(nid)
        return nid

    def link_audit(self) -> list[str]:
        issues = []
        for pid, chain in self.chains.items():
            for i, nid in enumerate(chain):
                node = self.nodes[nid]
                want_prev = chain[i - 1] if i else None
                want_next = chain[i + 1] if i + 1 < len(chain) else None
                if node.predecessor != want_prev or node.successor != want_next:
                    issues.append(f"{nid}: broken chain link")
                if i and node.spec.order_group < self.nodes[chain[i - 1]].spec.order_group:
                    issues.append(f"{nid}: chain violates group order")
        return issues

    # -- messaging

    def send(self, variant: str, sender, receiver, payload: str = "") -> None:
        if self.log is not None:
            self.log(PropagationMessage(variant, str(sender), str(receiver), payload))

    # -- reservations

    def duration(self, node: NodeState, machine: int) -> int:
        return node.spec.durations.get(machine, 0)

    def reserve(self, node: NodeState, start: int, machine: int, delay: int = 0) -> None:
        finish = start + self.duration(node, machine)
        self.calendars[machine].reserve(start, finish, node.id)
        node.placement = Placement(node.id.piece_id, node.id.step_id, machine, start, finish)
        node.status = Status.PLACED
        node.delay = delay
        node.exhausted = False

    def release(self, node: NodeState, status: Status = Status.IDLE) -> None:
        if node.placement is not None:
            self.calendars[node.placement.machine].release(node.placement.start)
            node.placement = None
        node.status = status

    def release_from(self, nid: NodeId, status: Status = Status.IDLE) -> None:
        """Release ``nid`` and everything downstream of it in its chain."""
        cur: Optional[NodeId] = nid
        first = True
        while cur is not None:
            node = self.nodes[cur]
            self.release(node, status if first else Status.IDLE)
            node.candidates = None
            first = False
            cur = node.successor

    def release_all(self) -> None:
        for node in self.nodes.values():
            self.release(node)
            node.candidates = None
            node.floor = 0

    def scan(self, node: NodeState, lower: int, machines: Optional[Sequence[int]] = None) -> Iterator[Candidate]:
        """Free (start, machine) slots from ``lower`` upward, earliest start then lowest id."""
        horizon = self.horizon
        caps = [(m, node.spec.durations[m], self.calendars[m])
                for m in (machines if machines is not None else node.spec.capable())]
        if not caps:
            return
        shortest = min(d for _, d, _ in caps)
        first: dict[int, int] = {}
        for s in range(lower, horizon - shortest + 1):
            for m, d, cal in caps:
                if s + d <= horizon and cal.is_free(s, s + d):
                    e = first.setdefault(m, s)
                    yield (s, m, s - e)

    def lower_bound(self, node: NodeState) -> int:
        lo = node.floor
        if node.predecessor is not None:
            prev = self.nodes[node.predecessor].placement
            if prev is not None:
                lo = max(lo, prev.finish)
        return lo

    def domain(self, nid: NodeId) -> tuple[int, ...]:
        """Start slots still open to ``nid`` given its predecessor and the calendar."""
        node = self.nodes[nid]
        if node.exhausted:
            return ()
        own = node.placement
        if own is not None:
            self.calendars[own.machine].release(own.start)
        try:
            lo = self.lower_bound(node)
            return tuple(sorted({s for s, _, _ in self.scan(node, lo)}))
        finally:
            if own is not None:
                self.calendars[own.machine].reserve(own.start, own.finish, nid)

    # -- results

    def placements(self) -> list[Placement]:
        return [n.placement for n in self.nodes.values() if n.placement is not None]

    def plan(self) -> Plan:
        return Plan.build(self.placements(), self.instance)

    def ledger_audit(self) -> list[str]:
        """Differences between the machine calendars and placed nodes."""
        issues = []
        booked = {(m, s, f, n) for m, cal in self.calendars.items() for s, f, n in cal.intervals()}
        placed = {(n.placement.machine, n.placement.start, n.placement.finish, n.id)
                  for n in self.nodes.values() if n.status is Status.PLACED}
        if booked != placed:
            issues.append(f"calendar/placement mismatch: {sorted(booked ^ placed, key=str)}")
        for nid, n in self.nodes.items():
            if (n.status is Status.PLACED) != (n.placement is not None):
                issues.append(f"{nid}: status {n.status.value} with placement {n.placement}")
        for m, cal in self.calendars.items():
            iv = cal.intervals()
            for (s1, f1, _), (s2, _, _) in zip(iv, iv[1:]):
                if s2 < f1:
                    issues.append(f"machine {m}: overlapping reservations at {s2}")
        return issues

    def begin_pass(self) -> None:
        for node in self.nodes.values():
            node.requests = 0
            node.candidates = None
            node.exhausted = False
            if node.status is not Status.PLACED:
                node.status = Status.IDLE


# ---------------------------------------------------------------- roles γ3..γ7

@dataclass(frozen=True)
class LocalOutcome:
    empty: tuple[NodeId, ...] = ()

    @property
    def all_propagated(self) -> bool:
        return not self.empty


def local_propagate(net: ConstraintNetwork, chooser: Optional[Chooser] = None) -> LocalOutcome:
    """Propagate every chain head to tail, backtracking on empty value sets.

    Chains run one after another by (priority, piece id); each node may ask
    its predecessor for an alternative at most ``horizon`` times per pass.
    """
    chooser = chooser or GREEDY
    budget = net.horizon
    empty: list[NodeId] = []
    for piece in net.chain_order():
        chain = net.chains.get(piece.piece_id, [])
        i = 0
        while i < len(chain) and net.nodes[chain[i]].status is Status.PLACED:
            i += 1
        while i < len(chain):
            node = net.nodes[chain[i]]
            if node.candidates is None:
                node.lower = net.lower_bound(node)
                node.candidates = iter(chooser.candidates(net, node, node.lower))
                node.status = Status.PROPAGATED
            cand = next(node.candidates, None)
            if cand is not None:
                start, machine, delay = cand
                net.reserve(node, start, machine, delay)
                receiver = node.successor if node.successor is not None else "controller"
                net.send("Propagate", node.id, receiver, f"finish={{{node.placement.finish}}}")
                i += 1
                continue
            pred = net.nodes[node.predecessor] if node.predecessor is not None else None
            if pred is None or pred.candidates is None or node.requests >= budget:
                node.exhausted = True
                node.status = Status.PROPAGATED
                node.candidates = None
                empty.append(node.id)
                break
            node.requests += 1
            net.send("RequestAlternative", node.id, pred.id)
            node.candidates = None
            node.status = Status.IDLE
            net.release(pred, Status.PROPAGATED)
            i -= 1
    return LocalOutcome(tuple(empty))


@dataclass(frozen=True)
class Conflict:
    kind: str          # Priority | MachineOverlap | MachineDown
    node: NodeId       # demoted node
    other: Optional[NodeId]
    bound: int         # new earliest start for ``node``

    def __str__(self) -> str:
        return f"{self.kind} at {self.node} (vs {self.other}), start >= {self.bound}"


@dataclass(frozen=True)
class GlobalOutcome:
    plan: Optional[Plan]
    conflicts: tuple[Conflict, ...] = ()

    @property
    def consistent(self) -> bool:
        return self.plan is not None


def _rank(node: NodeState) -> tuple[int, int, int]:
    return (node.priority, node.id.piece_id, node.id.step_id)


def global_check(net: ConstraintNetwork) -> GlobalOutcome:
    """Audit cross-chain constraints; demote and prune nodes on conflict.

    Machine exclusivity is checked over every calendar. Priority is checked
    between same-type pieces step by step; only pieces whose own
    higher-priority peers are conflict-free are demoted in one round, so
    the pruning bounds come from settled placements.
    """
    conflicts: list[Conflict] = []
    nodes = net.nodes

    for m in sorted(net.calendars):
        cal = net.calendars[m]
        booked = sorted(cal.reserved.items())
        for (s1, (f1, a)), (s2, (_, b)) in zip(booked, booked[1:]):
            if s2 < f1:
                na, nb = nodes[a], nodes[b]
                loser, winner = (na, nb) if _rank(na) > _rank(nb) else (nb, na)
                conflicts.append(Conflict("MachineOverlap", loser.id, winner.id,
                                          winner.placement.start + 1))
        for lo, hi in cal.down:
            for s0, (f0, nid) in booked:
                if lo < f0 and s0 < hi:
                    conflicts.append(Conflict("MachineDown", nid, None, hi))

    violating: dict[int, list[tuple[NodeId, NodeId, int]]] = {}
    for q_id, p_id, pairs in net.priority_pairs():
        for qn, pn in pairs:
            a = nodes[pn].placement
            b = nodes[qn].placement
            if a is not None and b is not None and b.start <= a.start:
                violating.setdefault(q_id, []).append((qn, pn, a.start + 1))

    by_type = net.pieces_by_type()
    for q_id, items in violating.items():
        q = net.instance.piece(q_id)
        blocked = any(p.priority < q.priority and p.piece_id in violating
                      for p in by_type[q.type_id])
        if blocked:
            continue
        for node_id, other, bound in items:
            conflicts.append(Conflict("Priority", node_id, other, bound))

    if not conflicts:
        for n in net.nodes.values():
            if n.placement is None:
                return GlobalOutcome(None, ())
        return GlobalOutcome(net.plan())

    # pruning: raise floors, then demote the earliest violated node per chain
    demote: dict[int, NodeId] = {}
    for c in conflicts:
        node = net.nodes[c.node]
        node.floor = max(node.floor, c.bound)
    for q_id in sorted({c.node.piece_id for c in conflicts if c.kind == "Priority"}):
        # settle every step of the piece against the same peers
        q = net.instance.piece(q_id)
        for sid in net.orders[q.type_id]:
            node = net.nodes[NodeId(q.piece_id, sid)]
            for p in by_type[q.type_id]:
                if p.priority < q.priority:
                    a = net.nodes[NodeId(p.piece_id, sid)].placement
                    if a is not None:
                        node.floor = max(node.floor, a.start + 1)
    for c in conflicts:
        chain = net.chains[c.node.piece_id]
        for nid in chain:
            node = net.nodes[nid]
            if node.placement is not None and node.placement.start < node.floor:
                cur = demote.get(c.node.piece_id)
                if cur is None or chain.index(nid) < chain.index(cur):
                    demote[c.node.piece_id] = nid
                break
    for piece_id, nid in sorted(demote.items()):
        net.send("GlobalCheck", "controller", nid, f"floor={net.nodes[nid].floor}")
        net.release_from(nid, Status.CONFLICTED)
    return GlobalOutcome(None, tuple(conflicts))


def enlarge_domains(net: ConstraintNetwork, failed: Sequence[NodeId]) -> int:
    """Widen value sets: first locally around ``failed``, then by growing the horizon."""
    if not failed:
        return net.horizon
    net.attempts += 1
    if net.attempts > MAX_ENLARGEMENTS:
        raise HorizonExhausted(f"no plan within horizon {net.horizon} after {MAX_ENLARGEMENTS} enlargements")
    if net.attempts == 1:
        first_in_chain: dict[int, NodeId] = {}
        for nid in failed:
            node = net.nodes[nid]
            around = [nid, node.predecessor, node.successor]
            for x in around:
                if x is None:
                    continue
                net.nodes[x].floor = 0
                chain = net.chains[x.piece_id]
                cur = first_in_chain.get(x.piece_id)
                if cur is None or chain.index(x) < chain.index(cur):
                    first_in_chain[x.piece_id] = x
        for nid in first_in_chain.values():
            net.release_from(nid)
    else:
        net.horizon = math.ceil(net.horizon * 3 / 2)
        net.horizon_history.append(net.horizon)
        net.release_all()
    for nid in failed:
        net.send("Enlarge", "controller", nid, f"horizon={net.horizon}")
    return net.horizon


# ---------------------------------------------------------------- driver

class PrimaryAlgorithm:
    """Executes the node roles under the two bundled nets.

    Call :meth:`parameterize` (γ0..γ2), then :meth:`propagate` (γ3..γ7);
    :meth:`solve` does both. The traces of both runs are kept.
    """

    def __init__(self, instance: ProblemInstance, orders=None, horizon: Optional[int] = None,
                 chooser: Optional[Chooser] = None,
                 log: Optional[Callable[[PropagationMessage], None]] = None,
                 on_fire=None, fuel: Optional[int] = None):
        self.instance = instance
        self.orders = orders
        self.horizon = horizon
        self.chooser = chooser or GREEDY
        self.log = log
        self.on_fire = on_fire
        self.fuel = fuel
        self.network: Optional[ConstraintNetwork] = None
        self.parameterization_trace: Optional[Trace] = None
        self.propagation_traces: list[Trace] = []
        self.local = LocalOutcome()
        self.result: Optional[GlobalOutcome] = None
        self.exhausted: Optional[HorizonExhausted] = None
        self.rounds = 0

    # roles
    def __call__(self, role: str, payload) -> Outcome:
        return getattr(self, "_" + {"γ0": "g0", "γ1": "g1", "γ2": "g2", "γ3": "g3", "γ4": "g4",
                                     "γ5": "g5", "γ6": "g6", "γ7": "g7"}[role])(payload)

    def _g0(self, payload):
        self.network = ConstraintNetwork(self.instance, self.orders, self.horizon, self.log)
        return Outcome(True, {"n": self.network.node_count()})

    def _g1(self, payload):
        self.network.init_nodes()
        return OK

    def _g2(self, payload):
        k = payload["connected"]
        if k < payload["n"]:
            self.network.connect(k)
            return Outcome(True, {"connected": k + 1})
        return OK if not self.network.link_audit() else FAIL

    def _g3(self, payload):
        self.rounds += 1
        self.network.begin_pass()
        return Outcome(True, {"round": self.rounds})

    def _g4(self, payload):
        self.local = local_propagate(self.network, self.chooser)
        return OK

    def _g5(self, payload):
        return Outcome(self.local.all_propagated, {"empty": len(self.local.empty)})

    def _g6(self, payload):
        if not self.local.all_propagated:
            return Outcome(False, {"empty": len(self.local.empty)})
        self.result = global_check(self.network)
        if self.result.consistent:
            return OK
        return Outcome(False, {"conflicts": len(self.result.conflicts)})

    def _g7(self, payload):
        try:
            h = enlarge_domains(self.network, self.local.empty)
        except HorizonExhausted as exc:
            self.exhausted = exc
            return FAIL
        self.local = LocalOutcome()
        return Outcome(True, {"horizon": h, "attempt": self.network.attempts})

    # drivers
    def parameterize(self) -> ConstraintNetwork:
        net = build_parameterization_net()
        fuel = 10 * max(self.instance.node_count(), 1)
        self.parameterization_trace = run(net, self, fuel, self.on_fire)
        if self.network is None or "done" not in (net.marking()["p2"] or [{}])[0]:
            raise RuntimeError("parameterization did not complete")
        return self.network

    def propagate(self, fuel: Optional[int] = None) -> Plan:
        if self.network is None:
            self.parameterize()
        net = build_propagation_net()
        self.result = None
        self.exhausted = None
        fuel = fuel or self.fuel or max(10 * self.network.node_count(), 100)
        trace = run(net, self, fuel, self.on_fire)
        self.propagation_traces.append(trace)
        if self.exhausted is not None:
            raise self.exhausted
        if self.result is None or not self.result.consistent:
            raise RuntimeError("propagation halted without a consistent plan")
        self.network.dirty = False
        return self.result.plan

    def solve(self) -> Plan:
        self.parameterize()
        return self.propagate()


def build_network(instance: ProblemInstance, orders=None, horizon: Optional[int] = None,
                  log=None) -> ConstraintNetwork:
    return PrimaryAlgorithm(instance, orders, horizon, log=log).parameterize()


def solve_csp(instance: ProblemInstance, seed: int = 0, horizon_hint: Optional[int] = None,
              log=None, on_fire=None) -> Plan:
    """Greedy earliest-start plan from the agent network.

    The propagation is deterministic; ``seed`` is accepted for interface
    symmetry with the optimizer and does not change the result.
    """
    return PrimaryAlgorithm(instance, horizon=horizon_hint, log=log, on_fire=on_fire).solve()


# ---------------------------------------------------------------- disturbances

@dataclass(frozen=True)
class MachineDown:
    machine: int
    start: int
    end: int


@dataclass(frozen=True)
class CapabilityChange:
    type_id: str
    step_id: int
    machine: int
    duration: int


@dataclass(frozen=True)
class NewPiece:
    piece: Piece


Event = Union[MachineDown, CapabilityChange, NewPiece]


def _updated_instance(instance: ProblemInstance, event: Event) -> ProblemInstance:
    if isinstance(event, MachineDown):
        if event.machine not in instance.machines:
            raise UnknownMachine(f"machine {event.machine}")
        return instance.replace(down=instance.down + (DownInterval(event.machine, event.start, event.end),))
    if isinstance(event, CapabilityChange):
        if event.type_id not in instance.types:
            raise UnknownType(event.type_id)
        if event.machine not in instance.machines:
            raise UnknownMachine(f"machine {event.machine}")
        wtype = instance.types[event.type_id]
        steps = []
        for s in wtype.steps:
            if s.step_id == event.step_id:
                durs = dict(s.durations)
                durs[event.machine] = event.duration
                s = StepSpec(s.step_id, s.order_group, durs)
            steps.append(s)
        types = dict(instance.types)
        types[event.type_id] = WorkpieceType(event.type_id, tuple(steps))
        return validate(instance.replace(types=types))
    if isinstance(event, NewPiece):
        if event.piece.type_id not in instance.types:
            raise UnknownType(event.piece.type_id)
        return validate(instance.replace(pieces=instance.pieces + (event.piece,)))
    raise TypeError(f"unknown event {event!r}")


def apply_disturbance(target, event: Event):
    """Absorb ``event`` by changing parameters.

    Given a ProblemInstance, returns the updated instance. Given a
    ConstraintNetwork (or a PrimaryAlgorithm holding one), edits it in
    place: placements touched by the change and their chain successors are
    released and the network is flagged dirty; everything else keeps its
    placement. Call ``PrimaryAlgorithm.propagate`` to re-place the released
    nodes.
    """
    if isinstance(target, ProblemInstance):
        return _updated_instance(target, event)
    algo = target if isinstance(target, PrimaryAlgorithm) else None
    net: ConstraintNetwork = target.network if algo else target
    instance = _updated_instance(net.instance, event)
    net.instance = instance
    if algo is not None:
        algo.instance = instance
    affected: list[NodeId] = []
    if isinstance(event, MachineDown):
        cal = net.calendars[event.machine]
        cal.down.append((event.start, event.end))
        for s, f, nid in cal.intervals():
            if s < event.end and event.start < f:
                affected.append(nid)
    elif isinstance(event, CapabilityChange):
        spec = instance.types[event.type_id].step(event.step_id)
        for nid, node in net.nodes.items():
            if node.type_id == event.type_id and nid.step_id == event.step_id:
                node.spec = spec
                if node.placement is not None and node.placement.machine == event.machine:
                    if node.placement.length != event.duration:
                        affected.append(nid)
    elif isinstance(event, NewPiece):
        net._init_chain(event.piece)
        order = net.orders[event.piece.type_id]
        for sid in order:
            nid = NodeId(event.piece.piece_id, sid)
            chain = net.chains[event.piece.piece_id]
            if chain:
                net.nodes[chain[-1]].successor = nid
                net.nodes[nid].predecessor = chain[-1]
            chain.append(nid)
    earliest: dict[int, NodeId] = {}
    for nid in affected:
        chain = net.chains[nid.piece_id]
        cur = earliest.get(nid.piece_id)
        if cur is None or chain.index(nid) < chain.index(cur):
            earliest[nid.piece_id] = nid
    for nid in earliest.values():
        net.release_from(nid)
    net.dirty = True
    return target
