"""Exception hierarchy; the CLI maps each branch to its own exit code."""


class StepPDError(Exception):
    exit_code = 1


class ConfigError(StepPDError):
    exit_code = 2


class DataError(StepPDError):
    exit_code = 3


class SchemaError(DataError, ValueError):
    pass


class LabelingError(DataError):
    pass


class EmptyResultError(DataError):
    pass


class NumericalError(StepPDError):
    exit_code = 4


class ConvergenceError(NumericalError):
    def __init__(self, message: str, grad_norm: float):
        super().__init__(f"{message} (final gradient inf-norm {grad_norm:.3e})")
        self.grad_norm = grad_norm
