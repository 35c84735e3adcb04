"""Exception hierarchy.

Configuration problems derive from :class:`ConfigError` (CLI exit code 2),
numerical failures from :class:`SolverError` (CLI exit code 1).
"""


class QsfracError(Exception):
    """Base class for all package errors."""


class ConfigError(QsfracError):
    """Invalid user input: unparsable file, unknown key, violated invariant."""


class InvalidSpecError(ConfigError):
    """A grid specification violates its invariants."""


class ParamsError(ConfigError):
    """Model parameters violate the admissible ranges."""


class SolverError(QsfracError):
    """A numerical routine could not produce a valid result."""


class InconsistentTieError(SolverError):
    """Field node ties do not match the crack set it is evaluated against."""


class SingularSystemError(SolverError):
    """Linear system could not be solved even after nullspace pinning."""


class NoConvergenceError(SolverError):
    """Newton iterations failed for every start."""


class TooLargeError(SolverError):
    """Brute-force enumeration bound exceeded."""


class TimeOrderError(SolverError):
    """Crack history received a non-increasing time."""


class NonPositiveDefiniteError(SolverError):
    """Linearized tensor is not positive definite on symmetric matrices."""


class DegenerateRotationError(SolverError):
    """Mean gradient of a component has nonpositive determinant."""


class FrameExcisedError(SolverError):
    """Cutoff region would exclude a Dirichlet frame cell."""


class MismatchedConfigError(SolverError):
    """Trajectories handed to a comparison do not share mesh or loading."""


class InsufficientSamplesError(QsfracError):
    """Sample grid cannot supply the reflected points."""


class OutOfRangeError(SolverError):
    """Requested times lie outside a trajectory's partition."""
