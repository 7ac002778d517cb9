"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """An operation received arguments that violate its preconditions."""


class ConfigurationError(ValueError):
    """A run configuration is unusable (empty dataset, bad option combination)."""


class InputError(IOError):
    """An input file could not be read or decoded."""

    def __init__(self, path, reason: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}")


class CheckpointError(IOError):
    """A checkpoint file is corrupt, truncated or of an unsupported version."""


class NonFiniteLoss(FloatingPointError):
    """Raised by a training step when a loss term is NaN or infinite."""

    def __init__(self, term: str, value: float):
        self.term = term
        self.value = value
        super().__init__(f"non-finite loss term {term!r}: {value}")
