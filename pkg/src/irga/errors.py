"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line front end can map
failures onto distinct process exit statuses without a lookup table.
"""


class IrgaError(Exception):
    exit_code = 1


class ParseError(IrgaError):
    exit_code = 2


class ConfigError(IrgaError):
    exit_code = 3


class DimensionMismatch(ConfigError):
    pass


class InvalidVariance(ConfigError):
    pass


class IncompatibleEstimator(ConfigError):
    pass


class NumericalError(IrgaError):
    exit_code = 4


class RankDeficient(NumericalError):
    pass


class NumericalDivergence(NumericalError):
    pass


class SingularCovariance(NumericalError):
    pass


class SingularKernel(NumericalError):
    pass


class DegenerateCovariance(NumericalError):
    pass


class UnboundedRatio(NumericalError):
    pass


class ResourceLimit(IrgaError):
    exit_code = 5


class TooManyVariables(ResourceLimit):
    pass


class TraceTooShort(ResourceLimit):
    pass


class NonConvergence(RuntimeWarning):
    """Issued (not raised) when an iterative fit stops at its iteration cap."""
