"""Exception hierarchy shared by all agentplan modules."""

from __future__ import annotations


class AgentPlanError(Exception):
    """Base class for every error raised by this package."""


class ProblemSyntaxError(AgentPlanError):
    """The problem document is not well-formed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class SemanticError(AgentPlanError):
    """The problem document parsed but violates one or more invariants.

    All issues found are kept in ``issues`` as ``(path, message)`` pairs.
    """

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(f"{path}: {msg}" for path, msg in self.issues))


class MissingSteps(AgentPlanError):
    pass


class NondeterministicMarking(AgentPlanError):
    pass


class FuelExhausted(AgentPlanError):
    pass


class HorizonExhausted(AgentPlanError):
    pass


class UnknownMachine(AgentPlanError):
    pass


class UnknownType(AgentPlanError):
    pass


class GroupTooLarge(AgentPlanError):
    pass


class Infeasible(AgentPlanError):
    pass


class LimitExceeded(AgentPlanError):
    pass
