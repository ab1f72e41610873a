"""Exception types raised by the simulator.

Plain input-validation problems raise :class:`ValueError`.
"""


class ConfigurationError(ValueError):
    """A scenario or configuration cannot be run as specified."""


class IllConditionedError(ArithmeticError):
    """A linear system is singular or too badly conditioned to trust."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition number {condition:.3e})")
        self.condition = condition


class ModelViolationError(ArithmeticError):
    """Impedance data produced a physically impossible quantity."""
