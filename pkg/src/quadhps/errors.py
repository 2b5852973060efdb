"""Exception hierarchy shared by the solver modules."""


class HpsError(Exception):
    """Base class for solver errors."""


class TreeError(HpsError):
    """Malformed or inconsistent quadtree."""


class ResonanceError(HpsError, ArithmeticError):
    """The shifted operator is singular on a patch (lambda hits a discrete eigenvalue)."""


class SingularInterfaceError(HpsError, ArithmeticError):
    """The interface system of a 4-to-1 merge could not be factored."""


class UnbalancedFamilyError(HpsError):
    """Sibling resolutions differ by a factor that cannot be coarsened away."""


class ConfigError(HpsError, ValueError):
    """Invalid run configuration."""
