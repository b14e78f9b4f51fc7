"""Exception hierarchy shared by every module.

The runner maps these onto process exit codes, so each class carries the
code it should produce.
"""


class SSHBraidError(Exception):
    exit_code = 1


class ConfigError(SSHBraidError, ValueError):
    exit_code = 2


class ConvergenceError(SSHBraidError):
    """A numerical refinement check did not meet its tolerance."""

    exit_code = 3

    def __init__(self, message, defect=None):
        super().__init__(message)
        self.defect = defect


class VerificationError(SSHBraidError):
    """A constructed operator failed its own algebraic check."""

    exit_code = 4

    def __init__(self, message, defect=None):
        super().__init__(message)
        self.defect = defect


class EdgeSetError(SSHBraidError):
    pass


class LabelingError(SSHBraidError):
    pass


class TrackingError(ConvergenceError):
    """Branch continuity was lost between consecutive grid points."""


class BraidError(SSHBraidError):
    pass
