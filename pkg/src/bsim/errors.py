"""Exception hierarchy.

ConfigError (and subclasses) signal bad user input; everything else under
BsimError signals a numerical or geometric failure.
"""


class BsimError(Exception):
    """Base class for all package errors."""


class MeshError(BsimError):
    """Invalid mesh state or failed mesh operation."""


class SolverError(BsimError):
    """Constraint or minimization failure."""


class BuildError(BsimError):
    """Anatomy construction infeasible for the given measurements."""


class MeasurementError(BsimError):
    """A tape-measure quantity could not be taken on the surface."""


class ConfigError(BsimError):
    """Malformed configuration or input file."""


class TrajectoryError(ConfigError):
    """Malformed trajectory CSV."""
