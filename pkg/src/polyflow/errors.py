"""Exception hierarchy shared by all polyflow modules.

Every failure mode that a CLI run can hit maps to one of these classes;
``polyflow.cli`` translates them into documented exit codes.
"""

from __future__ import annotations


class PolyflowError(Exception):
    """Base class for all polyflow errors."""


class ParameterError(PolyflowError, ValueError):
    """Invalid scalar parameter or mismatched operand shapes."""


class ConfigError(PolyflowError, ValueError):
    """Malformed or inconsistent run configuration."""

    def __init__(self, message, section=None, key=None):
        loc = ""
        if section is not None:
            loc = f"[{section}]" + (f" {key}" if key else "")
            message = f"{loc}: {message}"
        super().__init__(message)
        self.section = section
        self.key = key


class ConstructionError(PolyflowError):
    """Basis construction failed (e.g. loss of orthogonality at high degree)."""


class QuadratureError(PolyflowError):
    """A quadrature did not converge between node-count doublings."""


class DegenerateSpectrumError(PolyflowError):
    """Spectral gap of the configuration-space operator is numerically zero."""


class VacuumError(PolyflowError):
    """Total density 1 + rho reached zero or below at a grid point."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class PositivityError(PolyflowError):
    """Distribution function M(1+g) non-positive at a quadrature node."""


class CflError(PolyflowError):
    """Requested time step exceeds the advective stability bound."""

    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class NonContractionError(PolyflowError):
    """Fixed-point iteration stopped contracting; data too large."""


class SolverError(PolyflowError):
    """An implicit linear solve failed to converge."""


class ConsistencyError(PolyflowError):
    """Two independent evaluation routes disagreed beyond tolerance."""


class UnsupportedModelError(PolyflowError):
    """Requested operation is undefined for this model configuration."""
