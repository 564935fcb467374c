"""Exception hierarchy. Validation problems exit the CLI with code 2,
numerical failures with code 3."""


class CatfpcaError(Exception):
    """Base class for all package errors."""


class ValidationError(CatfpcaError):
    """Invalid input data or configuration (CLI exit code 2)."""


class DomainError(ValidationError):
    """Argument outside its mathematical domain (time out of range, bad truncation order)."""


class SchemaError(ValidationError):
    """Malformed CSV/JSON input; carries row numbers where possible."""


class ProtocolError(ValidationError):
    """Event data violates the declared protocol (overlapping TDS dominance,
    TDS subject without clicks)."""


class GridError(ValidationError):
    """A grid does not refine the trajectories it is paired with, or grids mismatch."""


class NumericalError(CatfpcaError):
    """Numerical failure in estimation or eigendecomposition (CLI exit code 3)."""
