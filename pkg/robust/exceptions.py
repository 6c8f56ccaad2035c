"""
Exception hierarchy for the toolkit.

Argument-level problems subclass ``ValueError`` so callers that only care
about "bad input" can keep catching that.
"""

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .mdp import ValidationReport


class RobustMdpError(Exception):
    """Base class for every error raised by the toolkit"""


class MdpValidationError(RobustMdpError, ValueError):
    """An MDP, policy or input file failed validation"""

    def __init__(self, report: "ValidationReport") -> None:
        self.report = report
        super().__init__(str(report))


class SpecError(RobustMdpError, ValueError):
    """An uncertainty spec or training config is unusable for the request"""


class NumericalError(RobustMdpError, ArithmeticError):
    """A linear solve failed, an iterate went non-finite, or a run diverged"""
