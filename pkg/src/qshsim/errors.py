"""Exception taxonomy shared across the simulator."""


class QshError(Exception):
    """Base class for all simulator errors."""


class ParameterError(QshError):
    """Invalid model or task parameters."""


class SolverError(QshError):
    """Eigensolver failure; carries iteration diagnostics when available."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegeneracyError(QshError):
    """Band crossing or tone-frequency collision where separation is required."""


class ResolutionError(QshError):
    """Discretization too coarse to certify an integer-valued result."""


class GaplessError(QshError):
    """No bulk gap at the requested Fermi energy (metallic point)."""


class StepSizeError(QshError):
    """Time step too coarse; step-halving acceptance check failed."""


class ConfigError(QshError):
    """Malformed or inconsistent run configuration."""
