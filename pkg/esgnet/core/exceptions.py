"""
Custom exceptions
"""


class EsgNetException(Exception):
    """
    Base class for all esgnet errors
    """


class DimensionError(EsgNetException):
    """
    Raised when tensor shapes are incompatible
    """

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        super().__init__(
            '{}: incompatible shapes {}'.format(
                op, ' and '.join(str(tuple(s)) for s in shapes))
        )


class ConfigError(EsgNetException):
    """
    Raised when a configuration value is invalid
    """


class ContractError(EsgNetException):
    """
    Raised when an operation is called outside its preconditions
    """


class NonFiniteError(EsgNetException):
    """
    Raised when an operation produces NaN or Inf values
    """

    def __init__(self, op: str, phase: str = 'forward'):
        self.op = op
        self.phase = phase
        super().__init__(
            'non-finite values produced by {} during {}'.format(op, phase)
        )


class FeatureFormatError(EsgNetException):
    """
    Raised when a feature file cannot be decoded
    """

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__('{} (at byte offset {})'.format(message, offset))


class VersionError(EsgNetException):
    """
    Raised when a checkpoint does not match the running code or config
    """


class UnknownVideoError(EsgNetException):
    """
    Raised when a video id cannot be found in a split
    """


class TrainingAborted(EsgNetException):
    """
    Raised when training stops early, eg because of a non-finite loss
    """
