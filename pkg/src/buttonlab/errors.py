"""Exception types shared across the package.

Invalid arguments raise the built-in ``ValueError``; the classes here cover
failure modes that need to be distinguishable from bad input.
"""


class NumericalError(RuntimeError):
    """A numerical procedure failed (e.g. factorization despite jitter)."""


class FormatError(ValueError):
    """A file or document violates its expected format or schema."""


class StateError(RuntimeError):
    """An operation was applied to a run state that cannot accept it."""
