"""Error types shared across the package.

The CLI maps these onto exit codes: precondition failures exit 2,
numerical failures exit 3.
"""


class PreconditionError(ValueError):
    """An input violates a documented precondition."""


class NumericError(RuntimeError):
    """A numerical procedure failed to reach its declared quality target."""
