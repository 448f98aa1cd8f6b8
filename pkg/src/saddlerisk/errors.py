"""Exception hierarchy shared across the package."""


class SaddleriskError(Exception):
    """Base class for all library errors."""


class DomainError(SaddleriskError):
    """Evaluation outside the convergence domain of a CGF."""


class NoSaddlepointError(SaddleriskError):
    """Target value lies outside the attainable range of the CGF gradient."""


class NumericalError(SaddleriskError):
    """A numerical routine failed to converge."""


class BranchError(SaddleriskError):
    """A tail expansion was requested too close to the mean-crossing point.

    The caller must switch to the zero-saddlepoint branch (or supply an
    external tail probability) instead.
    """


class UnsupportedCaseError(SaddleriskError):
    """Inputs fall in a regime the expansions deliberately do not cover."""


class DegenerateGeometryError(NumericalError):
    """The two tail directions collapse onto each other in the 2-d expansion."""
