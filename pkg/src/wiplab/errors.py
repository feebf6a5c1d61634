"""Exception types raised across the package."""


class WiplabError(Exception):
    """Base class for all package errors."""


class TermRangeError(WiplabError, ArithmeticError):
    def __init__(self, k, detail="value not representable"):
        super().__init__(f"term overflow at k={k}: {detail}")
        self.k = k


class InvalidFamilyError(WiplabError, ValueError):
    pass


class UnknownPresetError(WiplabError, LookupError):
    pass


class UnsupportedCriterionError(WiplabError, ValueError):
    pass


class VerdictMismatchError(WiplabError, AssertionError):
    pass


class OutOfWindowError(WiplabError, IndexError):
    pass


class CapacityError(WiplabError, ValueError):
    pass


class ZeroVarianceError(WiplabError, ArithmeticError):
    pass


class NonFiniteReplicateError(WiplabError, ArithmeticError):
    def __init__(self, statistic, index, seed):
        super().__init__(
            f"non-finite replicate for {statistic} at sample {index} (seed={seed})"
        )
        self.index = index
        self.seed = seed


class ConfigError(WiplabError, ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
