"""Exception types raised across the package."""


class NLDError(Exception):
    """Base class for all package errors."""


class DivergenceError(NLDError, ValueError):
    """An integral against a Levy measure diverges.

    ``regime`` is ``"origin"`` or ``"infinity"`` when known.
    """

    def __init__(self, message, regime=None):
        super().__init__(message)
        self.regime = regime


class AdmissibilityError(NLDError, ValueError):
    """A basis, kernel or resolution is not admissible for the requested task."""


class OutOfTubeError(NLDError, ValueError):
    """A point lies outside the tubular neighbourhood of the boundary."""


class SolverError(NLDError, RuntimeError):
    """An iterative solver failed to converge."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class ConfigError(NLDError, ValueError):
    """A run configuration failed to parse or validate.

    ``path`` is the dotted location inside the config (``"measure.alpha"``).
    """

    def __init__(self, message, path=None):
        if path:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path


class PathCapError(NLDError, RuntimeError):
    """A simulated path made more jumps than allowed without leaving the domain."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
