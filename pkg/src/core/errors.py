"""
Error Types
Structured exceptions raised across the graph, model, training and data layers.
Each carries the offending values as attributes so callers can log them.
"""

from typing import Any, Optional


class GraphIndexError(ValueError):
    """Edge references a user or item outside the graph bounds."""

    def __init__(self, user: int, item: int, num_users: int, num_items: int):
        self.user = user
        self.item = item
        self.num_users = num_users
        self.num_items = num_items
        super().__init__(
            f"Edge ({user}, {item}) out of range for graph with "
            f"{num_users} users and {num_items} items"
        )


class DimensionMismatchError(ValueError):
    """Dense operand does not have the shape an operation requires."""

    def __init__(self, what: str, expected: Any, actual: Any):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected {expected}, got {actual}")


class FusionError(ValueError):
    """Layer sets cannot be fused with the given fusion settings."""


class SamplingError(RuntimeError):
    """Negative sampling could not find an unobserved item."""

    def __init__(self, user: int, attempts: int):
        self.user = user
        self.attempts = attempts
        super().__init__(
            f"No unobserved item found for user {user} after {attempts} attempts"
        )


class MissingCacheError(RuntimeError):
    """Backward pass requested without the matching forward cache."""


class TrainingDivergedError(RuntimeError):
    """Loss became NaN or infinite."""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"Non-finite loss {loss} at epoch {epoch}, batch {batch}")


class DataFormatError(ValueError):
    """Interaction file contains a malformed token."""

    def __init__(self, line_number: int, token: str, source: Optional[str] = None):
        self.line_number = line_number
        self.token = token
        self.source = source
        where = f"{source}:{line_number}" if source else f"line {line_number}"
        super().__init__(f"Non-integer token {token!r} at {where}")


class SplitError(ValueError):
    """Split construction is impossible for the given data."""


class InductiveConfigError(ValueError):
    """Model configuration does not support the requested inductive inference."""


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


class EvaluationError(ValueError):
    """Ranking evaluation cannot be performed as requested."""
