"""Exception hierarchy shared by the library and the CLI.

Each family maps to a distinct CLI exit code (see :mod:`advrom.cli`).
"""


class AdvromError(Exception):
    exit_code = 1


class ConfigError(AdvromError, ValueError):
    """Invalid configuration. ``violations`` lists every problem found."""

    exit_code = 2

    def __init__(self, message, violations=None):
        self.violations = list(violations or [])
        if self.violations:
            message = message + "\n" + "\n".join("  - " + v for v in self.violations)
        super().__init__(message)


class ArgumentError(AdvromError, ValueError):
    exit_code = 2


class RomIOError(AdvromError, OSError):
    exit_code = 3


class EmptyInputError(RomIOError):
    pass


class MissingArtifactError(RomIOError):
    exit_code = 5


class NumericError(AdvromError, ArithmeticError):
    exit_code = 4


class StateError(AdvromError, RuntimeError):
    exit_code = 1


class PipelineError(AdvromError, ValueError):
    """Dimension mismatch inside the latent -> physical decoding pipeline."""

    exit_code = 2

    def __init__(self, stage, message):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")
