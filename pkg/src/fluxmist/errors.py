"""Exception hierarchy shared by all modules."""


class FluxmistError(Exception):
    pass


class ParameterDomainError(FluxmistError, ValueError):
    """A physical parameter lies outside its allowed domain."""


class ConfigurationError(FluxmistError, ValueError):
    pass


class NumericError(FluxmistError, ArithmeticError):
    """An iterative or spectral routine failed.

    ``residual`` carries the offending residual norm when one is available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class LabelingError(FluxmistError):
    pass


class DegeneratePointError(FluxmistError, ArithmeticError):
    pass


class InfeasibleError(FluxmistError):
    pass


class ValidityError(FluxmistError):
    pass
