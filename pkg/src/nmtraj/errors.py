"""Exception hierarchy shared by the simulation modules."""


class ConfigurationError(ValueError):
    """Parameters that cannot describe a valid simulation."""


class NumericalFault(RuntimeError):
    """A run hit a numerical condition that invalidates its results.

    Attributes
    ----------
    step : int or None
        Grid index at which the fault occurred, when known.
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class WindowOverflowError(NumericalFault):
    """More detections inside one memory window than the engine tracks."""


class StepSizeError(NumericalFault):
    """Per-step detection probability budget exceeded; ``dt`` is too large."""
