"""Exception types. Every error carries a stable machine-readable code."""

from __future__ import annotations


class FlexbottleError(Exception):
    """Base class; ``code`` is a short upper-case identifier."""

    code = "ERROR"

    def __init__(self, code: str | None = None, message: str = ""):
        if code is not None:
            self.code = code
        self.message = message or self.code
        super().__init__(f"{self.code}: {self.message}")


class ParameterError(FlexbottleError):
    code = "INVALID_PARAMETER"


class DomainError(FlexbottleError):
    code = "DOMAIN"


class ConvergenceError(FlexbottleError):
    code = "NO_CONVERGENCE"


class SearchError(FlexbottleError):
    code = "INFEASIBLE"
