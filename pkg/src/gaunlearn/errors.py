"""Exception hierarchy.

Two families matter to callers: ``ValidationError`` covers bad inputs
(the CLI maps it to exit code 2) and ``NumericalError`` covers solvers
that fail or diverge (exit code 3).
"""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class DimensionError(ValidationError):
    pass


class ParameterError(ValidationError):
    pass


class PartitionError(ValidationError):
    pass


class ParseError(ValidationError):
    """Malformed dataset, params or config file."""


class VariantError(ValidationError):
    """Operation called on the wrong model variant."""


class NotApplicableError(VariantError):
    pass


class OrderingError(ValidationError):
    """A pipeline stage ran before its prerequisite."""


class UndefinedSimilarityError(ValidationError):
    pass


class InfeasibleRescaleError(ValidationError):
    pass


class NumericalError(RuntimeError):
    """Iterative procedure failed to produce a usable answer."""


class DivergenceError(NumericalError):
    def __init__(self, epoch, loss):
        super().__init__(f"loss became non-finite ({loss}) at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


class SolverError(NumericalError):
    pass


class OracleError(NumericalError):
    pass
