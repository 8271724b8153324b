"""Exception and warning types raised across the package."""


class PolicyLearnError(Exception):
    """Base class for all package errors."""


class DatasetError(PolicyLearnError, ValueError):
    """Raised when an observational dataset violates its invariants."""


class DimensionMismatch(DatasetError):
    pass


class NonFiniteValue(DatasetError):
    pass


class ActionOutOfRange(DatasetError):
    pass


class InvalidPropensityRow(DatasetError):
    pass


class EmptyPointSet(PolicyLearnError, ValueError):
    pass


class KOutOfRange(PolicyLearnError, ValueError):
    pass


class MissingArmInTrainingFolds(PolicyLearnError, ValueError):
    pass


class EtaOutOfRange(PolicyLearnError, ValueError):
    pass


class ZeroPropensity(PolicyLearnError, ValueError):
    pass


class TooFewRows(PolicyLearnError, ValueError):
    pass


class DegenerateDataset(PolicyLearnError, ValueError):
    pass


class InstanceTooLarge(PolicyLearnError, ValueError):
    pass


class MissingVariable(PolicyLearnError, KeyError):
    pass


class ParameterOutOfRange(PolicyLearnError, ValueError):
    pass


class NonConvergenceWarning(RuntimeWarning):
    """Optimizer hit its iteration cap before meeting the tolerance."""


class OverlapWarning(UserWarning):
    """Known propensities fall below the requested overlap floor."""
