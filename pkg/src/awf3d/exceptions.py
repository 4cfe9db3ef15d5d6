"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Inputs violate a documented precondition (shapes, ranges, config keys)."""


class FormatError(ValueError):
    """A volume or measurement file on disk is malformed or truncated."""


class NumericalError(RuntimeError):
    """An iteration produced a non-finite value or an undefined quantity."""


class ProxNotConvergedWarning(RuntimeWarning):
    """The TV proximal solver hit its iteration cap before reaching tolerance."""
