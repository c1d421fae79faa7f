"""Exception hierarchy shared by every stage of the pipeline."""


class BrakeIDError(Exception):
    """Base class for all package errors."""


class InvalidDesign(BrakeIDError, ValueError):
    pass


class DegenerateFrame(BrakeIDError, ValueError):
    pass


class OutOfRange(BrakeIDError, ValueError):
    pass


class EmptyDataset(BrakeIDError):
    pass


class DegenerateColumn(BrakeIDError, ValueError):
    pass


class TooFewRows(BrakeIDError, ValueError):
    pass


class UnknownClass(BrakeIDError, ValueError):
    pass


class SchemaMismatch(BrakeIDError):
    pass


class CorruptRow(BrakeIDError):
    pass


class ShapeMismatch(BrakeIDError, ValueError):
    pass


class NoCachedActivations(BrakeIDError, RuntimeError):
    pass


class Diverged(BrakeIDError, RuntimeError):
    pass


class DegenerateTruth(BrakeIDError, ValueError):
    pass


class EmptyClass(BrakeIDError, ValueError):
    pass


class MissingNormSpec(BrakeIDError, ValueError):
    pass


class IncompatibleForward(BrakeIDError, ValueError):
    pass


class NormSpecMismatch(BrakeIDError, ValueError):
    pass


class LineSearchFailed(BrakeIDError, RuntimeError):
    pass


class MethodFailed(BrakeIDError, RuntimeError):
    pass


class OutOfRangeTarget(UserWarning):
    """Warning: inverse-design target outside the training label range +-10%."""
