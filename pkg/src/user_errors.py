class InputError(ValueError):
    """
    The user provided something unusable: a configuration, a data file or an argument.
    The command-line interface exits with code 2.
    """


class NumericalError(ArithmeticError):
    """
    A computation could not be carried out on otherwise valid input.
    The command-line interface exits with code 3.
    """


class ConfigError(InputError):
    """
    A configuration value is unknown, malformed or violates an invariant.
    """


class DataFormatError(InputError):
    """
    The data file lacks a required column or contains a non-numeric cell.
    """


class InvalidArgumentError(InputError):
    pass


class InvalidWeightError(InputError):
    """
    The weight function has a support of zero measure.
    """


class ValidationError(InputError):
    """
    A generated output file name is invalid on the current platform.
    """


class DegenerateWindowError(NumericalError):
    """
    No observation falls in the kernel window around a point.
    """

    def __init__(self, message, point=None, response=None):
        super().__init__(message)
        self.point = point
        self.response = response


class NoFeasibleBandwidthError(NumericalError):
    """
    Every candidate bandwidth leaves every observation without a leave-one-out window.
    """


class UnreliableIntegrationError(NumericalError):
    """
    Too many quadrature nodes have an empty kernel window.
    """


class RankDeficiencyError(NumericalError):
    pass


class FitFailureError(NumericalError):
    """
    A null model could not be fitted. May carry the indices of the offending observations.
    """

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = list(indices)


class IllConditionedFieldError(NumericalError):
    pass


class BootstrapReplicateError(NumericalError):
    """
    A single bootstrap replicate failed. The replicate is dropped.
    """


class CalibrationUnreliableError(NumericalError):
    """
    Too many bootstrap replicates failed for the quantile to be trusted.
    """
