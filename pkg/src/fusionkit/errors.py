"""Exception types shared across fusionkit modules."""


class FusionKitError(Exception):
    """Base class for all fusionkit errors."""


class ValidationError(FusionKitError, ValueError):
    """Invalid value for a domain type or operation precondition."""


class InconsistencyError(ValidationError):
    """Marginalized existence mass exceeds 1: non-exclusive hypotheses upstream."""


class InfeasibleAssignmentError(FusionKitError):
    """Cost matrix admits no finite full assignment."""


class ConfigError(FusionKitError, ValueError):
    """Bad experiment or CLI configuration."""
