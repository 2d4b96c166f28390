"""Exception types raised across the package."""


class AerothrowError(Exception):
    pass


class InvalidInputError(AerothrowError, ValueError):
    pass


class InvalidConfigError(AerothrowError, ValueError):
    pass


class NoCrossingError(AerothrowError, ValueError):
    """The payload never reaches the target plane."""


class ConditioningError(AerothrowError, ArithmeticError):
    pass


class OutOfRangeError(AerothrowError, ValueError):
    pass


class SimulationError(AerothrowError, RuntimeError):
    """Non-finite plant state. ``dump`` carries the offending state."""

    def __init__(self, msg, dump=None):
        super().__init__(msg)
        self.dump = dump
