"""Exception types raised across the package."""


class CloudVisionError(Exception):
    """Base class; the CLI maps these to the data-error exit status."""


class AngleNearPi(CloudVisionError, ValueError):
    pass


class EmptyInput(CloudVisionError, ValueError):
    pass


class TimestampOutOfRange(CloudVisionError, ValueError):
    pass


class UnknownImageId(CloudVisionError, KeyError):
    pass


class BadMagic(CloudVisionError, ValueError):
    pass


class CorruptIndex(CloudVisionError, ValueError):
    pass


class ImageTooSmall(CloudVisionError, ValueError):
    pass


class EmptyDatabase(CloudVisionError, ValueError):
    pass


class OutOfBounds(CloudVisionError, ValueError):
    """A sample location fell outside the interpolation domain.

    Callers treat this as "drop the point", not as a failure.
    """


class InsufficientObservations(CloudVisionError, RuntimeError):
    pass


class SingularSystem(CloudVisionError, RuntimeError):
    pass


class InvalidSpec(CloudVisionError, ValueError):
    pass


class EmptyRecords(CloudVisionError, ValueError):
    pass


class TooFewPoses(CloudVisionError, ValueError):
    pass
