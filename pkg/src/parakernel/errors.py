"""Exception hierarchy shared by the numerical modules and the CLI."""


class ParakernelError(Exception):
    """Base class for computation errors (CLI exit status 1)."""


class EvaluationError(ParakernelError):
    def __init__(self, message, radius=None):
        super().__init__(message)
        self.radius = radius


class UnsupportedGeometryError(ParakernelError):
    pass


class NonParabolicError(ParakernelError):
    pass


class ParabolicError(ParakernelError):
    pass


class BracketError(ParakernelError):
    pass


class DegenerateInputError(ParakernelError):
    pass


class SolverError(ParakernelError):
    """ODE or linear-solve failure; ``radius`` is the last radius reached, if known."""

    def __init__(self, message, radius=None):
        super().__init__(message)
        self.radius = radius


class DivergentKatoError(ParakernelError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class AccuracyGuardError(ParakernelError):
    pass


class EmptyRegionError(ParakernelError):
    pass


class ConfigError(Exception):
    """Configuration problem (CLI exit status 2)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
