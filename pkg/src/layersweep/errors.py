"""Exception and warning types shared across the package.

Exit-code mapping for the CLI: validation errors (bad inputs, broken
containers, misconfiguration) exit 1; computation errors (degenerate
graphs/spectra discovered mid-run) exit 2.
"""

from __future__ import annotations


class LayersweepError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class ValidationError(LayersweepError):
    """Invalid input data or configuration."""

    exit_code = 1


class ShapeError(ValidationError):
    pass


class ParameterError(ValidationError):
    pass


class ConfigurationError(ValidationError):
    pass


class EmptyResultError(ValidationError):
    pass


class DuplicateIdError(ValidationError):
    pass


class MissingLayerError(ValidationError):
    pass


class ChecksumError(ValidationError):
    pass


class NonFiniteError(ValidationError):
    pass


class AlignmentError(ValidationError):
    pass


class ComputationError(LayersweepError):
    """Numerical failure on otherwise valid input."""


class ConnectivityError(ComputationError):
    pass


class DegenerateSpectrumError(ComputationError):
    pass


class UndefinedCorrelationError(ComputationError):
    pass


class ZeroNormWarning(UserWarning):
    """Zero-norm vectors encountered; treated as similarity 0."""


class SmallGroupWarning(UserWarning):
    """A label group is small or was dropped below the cell threshold."""


class SpectrumWarning(UserWarning):
    """Extra near-unit eigenvalues were excluded from diffusion distances."""
