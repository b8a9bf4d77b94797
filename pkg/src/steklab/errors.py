"""Exception hierarchy shared by all modules."""


class SteklabError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SteklabError, ValueError):
    """Invalid or inconsistent configuration."""


class DegenerateGeometry(SteklabError, ValueError):
    """Parameters collapse the geometry (tiny widths, underflow, bad ranges)."""


class DegenerateTriangle(SteklabError, ValueError):
    """A triangle has (numerically) zero area in its chart."""


class NonManifold(SteklabError, ValueError):
    """An edge borders more than two triangles."""


class ResolutionMismatch(SteklabError, ValueError):
    """Attachment intervals cannot be matched to the cusp end rows."""


class OrientationError(SteklabError, ValueError):
    """The glued surface does not have the requested orientability."""


class SolverFailure(SteklabError, RuntimeError):
    """A linear algebra or eigenvalue solver failed."""


class NoConvergence(SolverFailure):
    """An iterative method did not reach its tolerance."""


class BracketFailure(SolverFailure):
    """A bisection bracket does not enclose a sign change."""


class InterfaceMismatch(NoConvergence):
    """The thick/thin interface iteration hit its iteration cap."""


class DegenerateC1(SteklabError, ArithmeticError):
    """The interface amplitude c1 is too small to form the combined profile."""


class QuadratureUnderflow(SteklabError, ArithmeticError):
    """A closed-form integral is numerically unreliable for these parameters."""
