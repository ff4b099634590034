"""Exception types raised by the library."""


class MnrError(Exception):
    """Base class for all library errors."""


class DomainError(MnrError, ValueError):
    """Input lies outside the model's domain (e.g. inner products not in [0, 1])."""


class DisconnectedError(MnrError):
    """Some requested nodes are not connected in the localization graph.

    ``labels`` holds the connected-component label of each requested node, in
    the order the nodes were requested.
    """

    def __init__(self, message, labels=None):
        super().__init__(message)
        self.labels = labels


class DegenerateRegressors(MnrError, ValueError):
    """Regressor values have (numerically) zero spread."""


class PerfectFit(MnrError, ValueError):
    """Residual sum of squares is zero, so the F statistic is undefined."""


class NonPositiveDenominator(MnrError, ValueError):
    """Measurement-error correction drove the slope denominator to <= 0."""


class SingularMoment(MnrError, ValueError):
    """Empirical second-moment matrix is (numerically) singular."""
