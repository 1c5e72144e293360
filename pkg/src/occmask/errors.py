"""Exception types shared across the package."""


class OccmaskError(Exception):
    """Base class for all package errors."""


class InvalidInputError(OccmaskError, ValueError):
    """Input data violates a precondition (bad depth, shapes, config values)."""


class SingularityError(OccmaskError, ArithmeticError):
    """A derivative was requested at a point where it does not exist."""


class ContractViolationError(OccmaskError, ValueError):
    """Inputs are well formed but break an assumption a formula relies on."""


class SceneConfigError(OccmaskError, ValueError):
    """A synthetic scene cannot be rendered as configured."""


class FormatError(OccmaskError, ValueError):
    """A file could not be parsed or written in the requested format."""
