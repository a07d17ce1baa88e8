"""Exceptions raised by the clipped_adp library.

Library code raises; only the command-line entry point turns these into exit codes.
"""

from typing import Any, Optional


class AdpError(Exception):
    """Base class for every error raised by clipped_adp."""


class DimensionError(AdpError, ValueError):
    """A vector or matrix does not have the length the caller declared."""


class DegeneratePlaneError(AdpError):
    """The final transition runs parallel to the boundary plane, or lambda left [0, 1]."""


class BoundaryError(AdpError):
    """No terminal-boundary plane was crossed by a transition that ended terminal."""


class ActionRangeError(AdpError, ValueError):
    """An action fell outside the environment's sanity range."""


class TruncationError(AdpError):
    """An unroll reached max_steps without entering the terminal set.

    The partial trajectory is kept on the exception so callers can still log its cost.
    """

    def __init__(self, message: str, partial: Optional[Any] = None):
        super().__init__(message)
        self.partial = partial
