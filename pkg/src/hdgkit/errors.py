"""Exception hierarchy shared by the solver modules.

``NumericalFailure`` subclasses map to CLI exit code 3; everything else that
derives from ``HdgError`` is treated as a usage/configuration problem.
"""


class HdgError(Exception):
    """Base class for all package errors."""


class NumericalFailure(HdgError):
    """Singular blocks, non-finite values and similar breakdowns."""


class DimensionMismatch(HdgError, ValueError):
    pass


class SingularBlock(NumericalFailure):
    def __init__(self, index, detail=""):
        self.index = int(index)
        msg = f"singular block at batch index {self.index}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class SingularLocalSolve(SingularBlock):
    pass


class NonFiniteState(NumericalFailure):
    pass


class NaNDetected(NumericalFailure):
    pass


class LineSearchFailed(NumericalFailure):
    pass


class InvalidResolution(HdgError, ValueError):
    pass


class DegenerateDomain(HdgError, ValueError):
    pass


class InvertedElement(NumericalFailure):
    pass


class UnsupportedOrder(HdgError, ValueError):
    pass


class UnsupportedDegree(HdgError, ValueError):
    pass


class TooLargeForDense(HdgError, ValueError):
    pass


class InconsistentDimensions(DimensionMismatch):
    pass


class ArnoldiBreakdown(RuntimeWarning):
    """Issued when the Arnoldi process stops early; carries the step index."""

    def __init__(self, step):
        self.step = int(step)
        super().__init__(f"Arnoldi breakdown at step {self.step}")
