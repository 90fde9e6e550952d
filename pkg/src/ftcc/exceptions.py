"""Error types raised across the library.

Every failure mode named in a module contract gets its own class so callers
can catch precisely, and so CLI validation messages stay actionable.
"""


class FtccError(Exception):
    """Base class for all library errors."""


class InvalidInputError(FtccError, ValueError):
    """Malformed argument: wrong shape, non-finite entries, bad length."""


class NoKernelError(FtccError):
    """Kernel extraction requested on a matrix that is full rank at the tolerance."""


class DegenerateKernelError(FtccError):
    """Kernel exists but its last entry vanishes, so it cannot be normalized."""


class ProtocolViolationError(FtccError):
    """A node attempted to send along a non-existent directed edge."""


class DegenerateInitializationError(FtccError):
    """Hankel defectiveness never appeared within the iteration cap.

    Carries the per-node iterate history so the caller can perturb the
    initial values and retry.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class UncontrollableDirectionError(FtccError):
    """Placement requested through an input direction the eigenvalue cannot see."""


class InsufficientTargetsError(FtccError):
    """The target list ran out while placeable eigenvalues remained."""


class ProtocolFailureError(FtccError):
    """The gain token exceeded its hop cap without reaching the read-only phase."""


class ConfigError(FtccError, ValueError):
    """Scenario configuration failed validation; message names the offending field."""


class DisconnectedGraphError(ConfigError):
    """The communication digraph is not strongly connected."""


class JointSystemError(ConfigError):
    """The plant is not jointly controllable and observable."""
