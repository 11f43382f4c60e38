"""Exception hierarchy shared by the engines and the runner."""


class RootflowError(Exception):
    """Base class for all engine failures."""


class ConvergenceError(RootflowError):
    """An iterative solver exhausted its iteration budget."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class PoleError(RootflowError):
    """A cotangent sum was evaluated on top of a root."""


class PositivityError(RootflowError):
    """A density lost strict positivity."""


class DegenerateConfigurationError(RootflowError):
    """Roots are not distinct/sorted or gaps are too small to resolve."""


class ConfigError(RootflowError):
    """An experiment configuration failed validation."""
