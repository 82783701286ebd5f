"""Exception hierarchy shared by the whole package."""


class PersuasionError(Exception):
    """Base class for every error raised by this package."""


class AssumptionViolation(PersuasionError):
    """A model assumption required by an algorithm does not hold.

    ``assumption`` is a short human-readable name used by the CLI when it
    reports the failure (exit code 3).
    """

    assumption = "model assumption"

    def __init__(self, message: str = ""):
        super().__init__(f"{self.assumption}: {message}" if message else self.assumption)


class AssumptionGViolated(AssumptionViolation):
    assumption = "non-unique receiver-optimal action"


class AssumptionDViolated(AssumptionViolation):
    assumption = "weakly dominated action"


class NoDistinguishablePair(AssumptionViolation):
    assumption = "no distinguishable pair of states"


class PriorPrefersAction1(AssumptionViolation):
    assumption = "receiver already prefers action 1 at the prior"


class SenderPreferenceViolated(AssumptionViolation):
    assumption = "sender does not strictly prefer action 1 in every state"


class PriorSupportViolated(AssumptionViolation):
    assumption = "prior mass below p0"


class ZeroProbabilitySignal(PersuasionError):
    pass


class NotDirect(PersuasionError):
    pass


class StrengthOutOfRange(PersuasionError):
    pass


class DecompositionInfeasible(PersuasionError):
    pass


class NotPersuasiveInput(PersuasionError):
    pass


class PreconditionEpsTooLarge(PersuasionError):
    pass


class PreconditionViolated(PersuasionError):
    pass


class HorizonExhausted(PersuasionError):
    pass


class NumericalFailure(PersuasionError):
    pass


class IncompatibleLearner(PersuasionError):
    pass


class RejectionBudgetExceeded(PersuasionError):
    pass


class InvalidGrid(PersuasionError):
    pass


class UnsupportedShape(PersuasionError):
    pass
