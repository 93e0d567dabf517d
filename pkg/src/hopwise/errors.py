"""Shared exception types.

The CLI maps these onto exit codes: usage errors -> 1, data/validation
errors -> 2, budget overflows -> 3.
"""


class HopwiseError(Exception):
    """Base class for package errors."""


class DataError(HopwiseError):
    """A file or record failed validation."""


class TripleParseError(DataError):
    """Malformed triple line; carries the 1-based line number."""

    def __init__(self, source, line_no, message):
        super().__init__(f"{source}:{line_no}: {message}")
        self.line_no = line_no


class ExampleFormatError(DataError):
    """Malformed question record; carries the 1-based line number."""

    def __init__(self, source, line_no, message):
        super().__init__(f"{source}:{line_no}: {message}")
        self.line_no = line_no


class GoldPathError(DataError):
    """A question's annotated path does not execute in the graph."""


class VocabMismatchError(DataError):
    """Checkpoint and graph/dataset disagree on relations or vocabulary."""


class InfeasibleSpecError(DataError):
    """Generator rejection rate exceeded the feasibility threshold."""


class BudgetError(HopwiseError):
    """Path enumeration exceeded the configured budget."""

    def __init__(self, budget, message=None):
        super().__init__(message or f"path enumeration exceeded budget of {budget}")
        self.budget = budget


class UsageError(HopwiseError):
    """Bad command-line arguments or config values."""
