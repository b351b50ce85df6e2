"""Exception types shared across the package."""


class PreconditionError(ValueError):
    """An operation was called with arguments that violate its contract."""


class ConfigError(ValueError):
    """An experiment or CLI configuration is invalid."""


class SubmissionError(RuntimeError):
    """A task was submitted to a device that can no longer accept work."""


class KernelError(RuntimeError):
    """A kernel failed while executing on a device."""

    def __init__(self, procedure, cause):
        super().__init__(f"kernel from procedure {procedure} failed: {cause!r}")
        self.procedure = procedure
        self.cause = cause
