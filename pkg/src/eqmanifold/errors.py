"""Exception hierarchy shared by all modules."""


class EqManifoldError(Exception):
    """Base class for every error raised by this package."""

    #: machine-readable name used in CLI error reports
    kind = "Error"


class ParseError(EqManifoldError):
    kind = "ParseError"

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)


class EvaluationError(EqManifoldError):
    kind = "EvaluationError"


class ProblemError(EqManifoldError):
    """Malformed problem definition (bad JSON, wrong component count, ...)."""

    kind = "ProblemError"


class NotDivisible(EqManifoldError):
    kind = "NotDivisible"


class NotOnManifold(EqManifoldError):
    kind = "NotOnManifold"


class VanishingDrift(EqManifoldError):
    kind = "VanishingDrift"


class IntegrationError(EqManifoldError):
    kind = "StepFailure"


class LeftDomain(EqManifoldError):
    kind = "LeftDomain"


class NoConvergence(EqManifoldError):
    kind = "NoConvergence"


class Degenerate(EqManifoldError):
    kind = "Degenerate"


class NotABifurcationPoint(EqManifoldError):
    kind = "NotABifurcationPoint"


class DegenerateCoefficient(EqManifoldError):
    kind = "DegenerateCoefficient"


class NonHyperbolic(EqManifoldError):
    kind = "NonHyperbolic"


class NoSeedConvergence(EqManifoldError):
    kind = "NoSeedConvergence"


class FoldInCurve(EqManifoldError):
    kind = "FoldInCurve"


class NoLanding(EqManifoldError):
    kind = "NoLanding"
