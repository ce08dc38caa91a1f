"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class MissingArtifactError(FileNotFoundError):
    """A required model/dataset/mask file does not exist."""


class NumericalError(ArithmeticError):
    """Training or estimation produced non-finite values."""
