"""Exception types shared across the package.

Exit-code mapping for the CLI: bad inputs, unloadable checkpoints, and
misconfiguration exit 1; failures during the forward pass or while writing
the container exit 2.
"""

from __future__ import annotations


class CellstatesError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class ParameterError(CellstatesError):
    """Invalid configuration or argument value."""

    exit_code = 1


class CheckpointError(CellstatesError):
    """Checkpoint directory is missing, malformed, or inconsistent."""

    exit_code = 1


class InputError(CellstatesError):
    """Expression input cannot be read or fails its invariants."""

    exit_code = 1


class ExtractionError(CellstatesError):
    """Forward pass or container assembly failed on otherwise valid input."""

    exit_code = 2
