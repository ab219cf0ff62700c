"""Exception hierarchy shared by every module.

Each class carries the process exit code the CLI maps it to.
"""


class HskdvError(Exception):
    exit_code = 1


class ConfigurationError(HskdvError, ValueError):
    exit_code = 2


class NumericError(HskdvError, ArithmeticError):
    exit_code = 3


class ConvergenceError(HskdvError):
    """Iteration failed to converge; ``history`` holds per-iteration diagnostics."""

    exit_code = 4

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])
