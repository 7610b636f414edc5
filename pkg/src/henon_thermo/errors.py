"""Exception hierarchy shared by all modules.

Each error carries an ``exit_code`` used by the command line front end:
2 for user or configuration problems, 3 for numerical non-convergence and
1 for anything else.
"""


class HenonError(Exception):
    exit_code = 1


class InvalidInputError(HenonError, ValueError):
    exit_code = 2


class ConfigError(HenonError, ValueError):
    exit_code = 2


class SingularMapError(HenonError):
    """Inverse requested for b = 0."""
    exit_code = 2


class NoSaddleError(HenonError):
    exit_code = 2


class EscapeError(HenonError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class BracketError(HenonError):
    exit_code = 2


class ConvergenceError(HenonError):
    exit_code = 3

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class DivergenceError(HenonError):
    exit_code = 3


class ResourceError(HenonError):
    pass


class NotFoundError(HenonError):
    pass


class GeometryError(HenonError):
    pass


class RefinementError(GeometryError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DepthError(HenonError):
    exit_code = 2


class TailError(HenonError):
    exit_code = 3


class DegenerateError(HenonError):
    exit_code = 2


class DependencyError(HenonError):
    exit_code = 2


class SchemaError(HenonError):
    exit_code = 2
