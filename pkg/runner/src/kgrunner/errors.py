"""Runner-side errors. Deliberately standalone: the runner talks to the
evaluation harness through files only, never through imports."""

from __future__ import annotations


class RunnerError(Exception):
    """Base class for runner failures."""


class ModelLoadFailure(RunnerError):
    """Model or tokenizer could not be loaded."""


class SchemaViolation(RunnerError):
    """An input file does not match the wire format."""


class NoMatch(RunnerError):
    """Layer filter matched no 2-D parameter tensor."""
