"""Exception types shared across modules; the CLI maps each to an error category."""


class ShapeError(ValueError):
    """Array dimensions do not chain (code length, signal length, layer shapes)."""


class DivergenceError(ArithmeticError):
    """An iterative procedure produced a non-finite or exploding objective."""


class SingularSystemError(ArithmeticError):
    """A normal-equation system is singular or too ill-conditioned to trust."""


class FormatError(ValueError):
    """A binary or text artifact does not match its declared layout."""


class ConfigError(ValueError):
    """An experiment configuration is malformed or inconsistent."""
