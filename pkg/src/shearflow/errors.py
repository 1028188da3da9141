"""Exception hierarchy. Each solver failure carries the CLI exit code it maps to."""


class SolverError(Exception):
    exit_code = 1

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


class ConfigError(SolverError):
    exit_code = 2


class CornerIncompatibility(ConfigError):
    """Boundary perturbation does not vanish at a corner of the square."""


class SingularSystem(SolverError):
    exit_code = 3


class DegenerateFlow(SolverError):
    """Transport speed fell below the configured floor."""

    exit_code = 10


class DiffeoFailure(SolverError):
    exit_code = 11


class InversionFailure(DiffeoFailure):
    pass


class InnerDivergence(SolverError):
    exit_code = 12


class OuterDivergence(SolverError):
    exit_code = 13


class PressureDomain(SolverError):
    """Density perturbation reached w <= -1."""

    exit_code = 14


def with_step(exc, step):
    """Return a copy of ``exc`` tagged with the Picard step index."""
    tagged = type(exc)(str(exc), step=step)
    tagged.__cause__ = exc
    return tagged


class StudyFailure(AssertionError):
    """A study's acceptance assertion failed; ``table`` holds the emitted rows."""

    exit_code = 4

    def __init__(self, message, table=None):
        self.table = table
        super().__init__(message)
