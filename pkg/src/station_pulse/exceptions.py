"""Exception and warning types raised across the pipeline."""


class StationPulseError(ValueError):
    """Base class for all pipeline errors.

    ``station_id`` is set when the failure can be pinned to a single station.
    """

    def __init__(self, message, station_id=None):
        super().__init__(message)
        self.station_id = station_id


class ParseError(StationPulseError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ReferentialError(StationPulseError):
    pass


class ValidationError(StationPulseError):
    pass


class EmptyInputError(StationPulseError):
    pass


class AllMissingError(StationPulseError):
    pass


class DegenerateSeriesError(StationPulseError):
    pass


class ShapeError(StationPulseError):
    pass


class LengthError(StationPulseError):
    pass


class ParameterError(StationPulseError):
    pass


class UndefinedSilhouetteError(StationPulseError):
    pass


class ZeroVarianceError(StationPulseError):
    pass


class DegenerateDistanceError(StationPulseError):
    pass


class ConsistencyError(StationPulseError):
    pass


class StationPulseWarning(UserWarning):
    pass
