"""Exception types shared across the package."""


class ElectroflowError(Exception):
    """Base class for all package errors."""


class DimensionError(ElectroflowError, ValueError):
    """A vector has the wrong length for the operator it is applied to."""


class ContractViolation(ElectroflowError, ValueError):
    """A documented precondition of an operation does not hold."""


class SingularityError(ElectroflowError, ArithmeticError):
    """A Laplacian system is singular, usually because the graph is disconnected."""


class ParseError(ElectroflowError, ValueError):
    """Malformed instance file. Carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class WalkCapExceeded(ElectroflowError, RuntimeError):
    """A random walk ran past its step cap without reaching the target set."""


class ResourceError(ElectroflowError, MemoryError):
    """A memory or size budget would be exceeded."""

    def __init__(self, message: str, required: int, available: int):
        self.required = required
        self.available = available
        super().__init__(f"{message} (required {required}, available {available})")


class BudgetExceeded(ElectroflowError, RuntimeError):
    """A data structure used more updates than it was initialized for."""


class CentralityError(ElectroflowError, RuntimeError):
    """Recentering failed to converge."""


class InfeasibleError(ElectroflowError, RuntimeError):
    """The flow instance has no feasible solution."""


class RoundingError(ElectroflowError, RuntimeError):
    """Rounding a fractional flow did not produce a certified optimum."""
