"""Exception hierarchy shared by every brickflow module."""

from __future__ import annotations


class BrickflowError(Exception):
    """Base class for all library errors."""


# workflow document / IR

class WorkflowError(BrickflowError):
    """A workflow document cannot be turned into a valid IR."""


class WorkflowSyntaxError(WorkflowError):
    pass


class MalformedRef(WorkflowError):
    pass


class NonConsecutiveSteps(WorkflowError):
    pass


class EmptyResult(WorkflowError):
    pass


class ForwardReference(WorkflowError):
    pass


# registry

class RegistryError(BrickflowError):
    pass


class DuplicateTool(RegistryError):
    pass


class DanglingConstraintSlot(RegistryError):
    pass


class RegistrySyntaxError(RegistryError):
    pass


class UnknownTool(RegistryError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class EmptyRegistry(RegistryError):
    pass


# raster operations

class RasterError(BrickflowError):
    pass


class DimensionMismatch(RasterError):
    pass


class KindViolation(RasterError):
    pass


class NonPositiveRatio(RasterError):
    pass


class EmptyValidRegion(RasterError):
    pass


class EmptyMask(RasterError):
    pass


class NetpbmError(BrickflowError):
    pass


# execution

class BackendError(BrickflowError):
    """Raised by a backend when a tool invocation fails."""


class MockUnsupportedTool(BackendError):
    pass


class CycleDetected(BrickflowError):
    pass


# rewards / training

class MissingComponent(BrickflowError):
    pass


class GroupTooSmall(BrickflowError):
    pass


class NonFiniteInput(BrickflowError):
    pass


class NoCandidates(BrickflowError):
    pass


# critic

class CriticUnavailable(BrickflowError):
    pass


class MalformedCritique(BrickflowError):
    pass
