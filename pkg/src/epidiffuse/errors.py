"""Exception types shared across the package."""


class EpidiffuseError(Exception):
    """Base class for all package errors."""


class InputError(EpidiffuseError, ValueError):
    """Malformed or out-of-contract input (non-finite values, bad sample order...)."""


class DomainError(EpidiffuseError, ValueError):
    """Argument outside the mathematical domain of a function."""


class HypothesisError(EpidiffuseError, ValueError):
    """A structural hypothesis needed by a computation does not hold."""


class TransformUnavailable(HypothesisError):
    """The diagonalizing change of variables needs d > a and mu > 0."""


class ConfigError(InputError):
    """Configuration file problem; carries the offending line when known."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None and line is not None:
            where = f"{path}:{line}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class IntegrityError(EpidiffuseError, RuntimeError):
    """Numerical integrity failure: non-finite state or overflow during a run."""

    def __init__(self, message, step=None, cell=None, t=None):
        self.step = step
        self.cell = cell
        self.t = t
        super().__init__(message)
