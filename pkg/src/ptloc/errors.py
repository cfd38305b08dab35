"""Exception hierarchy.

Errors split into two families that the command line maps to different exit
codes: input/usage problems and numerical-domain problems (grids too coarse,
states outside an operator's domain, failed completeness gates).
"""


class PtlocError(Exception):
    """Base class for all package errors."""


class InvalidInputError(PtlocError, ValueError):
    """An argument violates a documented precondition."""


class IncompatibleStateError(InvalidInputError):
    """States (or a state and an operator) live on different grids or subspaces."""


class InvalidChartError(InvalidInputError):
    """Operator and state are expressed in different momentum charts."""


class InvalidCompositionError(InvalidInputError):
    """An operator composition outside the first-order calculus was requested."""


class InvalidOrderError(InvalidInputError):
    """Angular or Legendre order out of range."""


class ConfigError(InvalidInputError):
    """Configuration file missing, malformed, or carrying unknown keys."""


class DegenerateObserverError(InvalidInputError):
    """Observer four-velocity orthogonal to the momentum (u.p = 0)."""


class SurfaceMissError(PtlocError):
    """The observation surface is never crossed inside the search interval."""


class DegenerateSurfaceError(PtlocError):
    """The surface is crossed at a non-simple root (|df/dtau| below threshold)."""


class NumericalDomainError(PtlocError, ArithmeticError):
    """A computation left its numerically valid domain."""


class ResolutionError(NumericalDomainError):
    """Grid too coarse or too small for the requested quantity."""


class TruncationError(NumericalDomainError):
    """An angular or spectral truncation discards more than the allowed mass."""


class SingularDomainError(NumericalDomainError):
    """State carries weight where an operator coefficient is singular."""


class CompletenessError(NumericalDomainError):
    """A POVM normalization check failed."""


class MapValidationError(CompletenessError):
    """User-supplied coordinate maps fail the position-POVM completeness gate."""


class LocalizationError(NumericalDomainError):
    """An initially localized state is not localized to the required floor."""


class PoleError(NumericalDomainError):
    """Special function evaluated at a pole."""


class RangeError(NumericalDomainError):
    """Argument outside the supported evaluation range."""
