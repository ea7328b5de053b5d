"""Shared exception types."""


class ValidationError(ValueError):
    """An input violates a documented invariant; the message names it."""


class CapExceededError(RuntimeError):
    """An enumeration would exceed the configured point cap."""
