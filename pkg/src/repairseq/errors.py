"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or inconsistent input (spec, state, config, scenario)."""


class FixtureError(InputError):
    """A shipped or user-supplied system file failed validation."""


class ContractViolation(RuntimeError):
    """An operation was called outside its documented preconditions."""


class InvalidActionError(ContractViolation):
    """An action targeted a component that is not currently damaged."""


class ResourceError(RuntimeError):
    """More simultaneous repairs were requested than resource units allow."""


class ComplexityError(RuntimeError):
    """Exhaustive enumeration refused because the instance is too large."""


class TrainingAborted(RuntimeError):
    """Training hit a non-finite loss or parameter."""
