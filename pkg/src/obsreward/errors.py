"""Exception hierarchy. ``exit_code`` is what the CLI returns for each class."""


class ObsRewardError(Exception):
    exit_code = 1


class ConfigError(ObsRewardError, ValueError):
    """Invalid configuration or usage; names the offending field."""

    exit_code = 2

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class InputError(ObsRewardError, ValueError):
    """Malformed input data (NaN cells, dimension mismatch, missing names)."""

    exit_code = 2


class EstimatorError(ObsRewardError, ArithmeticError):
    exit_code = 4


class RankDeficiencyError(EstimatorError):
    pass


class DegenerateInstrumentError(EstimatorError):
    pass


class DivergenceError(EstimatorError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class FoldSizeError(EstimatorError):
    pass


class UndefinedCorrelationError(EstimatorError):
    pass
