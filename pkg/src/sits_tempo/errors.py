"""Exception hierarchy shared by every subpackage."""


class SitsError(Exception):
    """Base class for all errors raised by sits_tempo."""


class ConfigurationError(SitsError, ValueError):
    """An operation or model was configured with values it cannot honour."""


class DimensionError(SitsError, ValueError):
    """Tensor shapes do not conform."""


class TapeError(SitsError, RuntimeError):
    """Misuse of the autodiff tape (unrecorded node, reuse without reset)."""


class DegenerateBatchError(SitsError, ValueError):
    """Batch statistics requested on a batch of a single sample."""


class FormatError(SitsError, ValueError):
    """A data file row has the wrong number of fields."""


class ParseError(SitsError, ValueError):
    """A data file field is not numeric."""


class AlignmentError(SitsError, ValueError):
    """Feature and label files disagree on the number of rows."""


class StratificationError(SitsError, ValueError):
    """A class is too small to be spread over every partition."""


class UndefinedMetricError(SitsError, ValueError):
    """A metric was requested on zero samples."""


class TrainingError(SitsError, RuntimeError):
    """Training diverged (non-finite loss)."""


class LabelError(SitsError, ValueError):
    """A class label lies outside the declared class range."""
