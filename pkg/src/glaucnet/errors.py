"""Exception types raised across the package."""


class GlaucnetError(Exception):
    """Base class for all errors raised by glaucnet."""


class ShapeMismatch(GlaucnetError, ValueError):
    pass


class DegenerateOutput(GlaucnetError, ValueError):
    """A computed output dimension is smaller than one."""


class StateMissing(GlaucnetError, RuntimeError):
    """``backward`` was called before ``forward``."""


class ConfigInvalid(GlaucnetError, ValueError):
    pass


class InputTooSmall(GlaucnetError, ValueError):
    pass


class LabelInvalid(GlaucnetError, ValueError):
    pass


class IoFailure(GlaucnetError, OSError):
    pass


class FormatCorrupt(GlaucnetError, ValueError):
    pass


class ImageTooSmall(GlaucnetError, ValueError):
    pass


class NonSquareRotation(GlaucnetError, ValueError):
    pass


class ThresholdInvalid(GlaucnetError, ValueError):
    pass


class DegenerateMask(GlaucnetError, ValueError):
    pass


class LengthMismatch(GlaucnetError, ValueError):
    pass


class EmptyInput(GlaucnetError, ValueError):
    """An aggregate was requested over an empty collection."""


class OneClassOnly(GlaucnetError, ValueError):
    pass


class EmptyDataset(GlaucnetError, ValueError):
    pass


class DatasetInvalid(GlaucnetError, ValueError):
    pass


class IdMismatch(GlaucnetError, ValueError):
    pass
