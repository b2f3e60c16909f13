"""Exception hierarchy shared by every module of the package."""


class OrdboundsError(Exception):
    """Base class for all package errors."""


class LawError(OrdboundsError, ValueError):
    """An observed probability law is malformed."""


class DimensionMismatch(LawError):
    pass


class NegativeProbability(LawError):
    pass


class StratumSumMismatch(LawError):
    def __init__(self, stratum, deviation):
        self.stratum = stratum
        self.deviation = deviation
        super().__init__(f"stratum {stratum} sums to 1{deviation:+.3g}")


class EmptyStratum(LawError):
    def __init__(self, stratum):
        self.stratum = stratum
        super().__init__(f"stratum {stratum} has no observations")


class MissingInstrumentColumn(LawError):
    pass


class SettingMismatch(OrdboundsError, ValueError):
    pass


class LimitExceeded(OrdboundsError, ValueError):
    pass


class UnsupportedCombination(OrdboundsError, ValueError):
    pass


class InfeasibleLaw(OrdboundsError):
    """The observed law cannot arise from the assumed causal model."""

    def __init__(self, message, certificate=None):
        self.certificate = certificate
        super().__init__(message)


class Infeasible(OrdboundsError):
    """A linear program has no feasible point.

    ``certificate`` is a row combination ``y`` with ``A^T y >= 0`` and
    ``b . y < 0`` (Farkas alternative).
    """

    def __init__(self, certificate):
        self.certificate = certificate
        super().__init__("linear program is infeasible")


class Unbounded(OrdboundsError):
    pass


class RankDeficient(OrdboundsError):
    pass


class NotPointed(OrdboundsError):
    pass


class ConvergenceFailure(OrdboundsError):
    pass


class QuadratureResidueTooLarge(OrdboundsError):
    pass
