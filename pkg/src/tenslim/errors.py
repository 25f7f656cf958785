"""Exception hierarchy shared across the toolkit."""


class TenslimError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatch(TenslimError):
    pass


class InvalidMode(TenslimError):
    pass


class IndexOutOfBounds(TenslimError):
    pass


class RankChainBroken(TenslimError):
    pass


class BudgetInfeasible(TenslimError):
    pass


class SingularUpdate(TenslimError):
    pass


class RankTooLarge(UserWarning):
    """Requested rank exceeds what the tensor supports; it was clamped."""


class EmptySupport(TenslimError):
    pass


class ModeMismatch(TenslimError):
    pass


class InvalidStep(TenslimError):
    pass


class ScheduleRegression(TenslimError):
    pass


class NonFiniteLogits(TenslimError):
    pass


class NonFiniteGradient(TenslimError):
    pass


class ZeroNorm(TenslimError):
    pass


class EmptyInput(TenslimError):
    pass


class ConfigError(TenslimError):
    pass


class BundleError(TenslimError):
    """Base class for on-disk bundle failures."""


class BadMagic(BundleError):
    pass


class VersionUnsupported(BundleError):
    pass


class CorruptOffsets(BundleError):
    pass


class TruncatedPayload(BundleError):
    pass
