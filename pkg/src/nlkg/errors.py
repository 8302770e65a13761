"""Exception types shared across the package."""


class NLKGError(Exception):
    pass


class NonFiniteIntegrand(NLKGError):
    pass


class AmplitudeOverflow(NLKGError):
    """Field amplitude beyond the model cap.

    ``estimate`` optionally carries the best partial result reached before the cap.
    """

    def __init__(self, msg, estimate=None):
        super().__init__(msg)
        self.estimate = estimate


class ModelOutsideClass(NLKGError):
    pass


class GridMismatch(NLKGError):
    pass


class TruncationLoss(NLKGError, UserWarning):
    """Rescaling pushed a measurable part of the L2 mass off the grid."""


class InadmissiblePair(NLKGError):
    pass


class NoRoot(NLKGError):
    pass


class BracketFailure(NLKGError):
    pass


class TMEstimateUnstable(NLKGError):
    pass


class MinimizerStalled(NLKGError):
    pass


class NumericalBreakdown(NLKGError):
    pass


class CutoffExceedsBox(NLKGError):
    pass


class EmptyConstraint(NLKGError):
    pass


class ParamOutOfRange(NLKGError):
    pass


class PreconditionError(NLKGError):
    pass
