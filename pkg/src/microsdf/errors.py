"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class ConfigError(ValueError):
    """A recipe, rule, or scene configuration is internally inconsistent."""


class ContractError(ValueError):
    """Inputs violate an interface contract (shape/dimension mismatch)."""


class DegenerateNormalError(ArithmeticError):
    """All finite-difference samples were equal; no surface normal exists."""


class FieldEvaluationError(RuntimeError):
    """A field returned a non-finite value during tracing.

    Carries the ray origin/direction and the parameter t at which the
    evaluation failed.
    """

    def __init__(self, message, origin=None, direction=None, t=None):
        super().__init__(message)
        self.origin = origin
        self.direction = direction
        self.t = t
