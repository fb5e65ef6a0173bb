"""
This lightweight module defines custom exceptions. We don't need to override much
from the Exceptions module, but we want to be able to raise or check for specific exceptions related
to the recommender, and map them onto the command-line exit codes.
"""

class RecommenderError(Exception):
    pass


class DimensionError(RecommenderError):
    pass


class ConfigError(RecommenderError):
    pass


class NumericalError(RecommenderError):
    pass


class IngestionError(RecommenderError):
    """Bad input file. Carries the file and the 1-based line number when known"""
    def __init__(self, message: str, path: str = None, line: int = None) -> None:
        self.path = path
        self.line = line
        location = ''
        if path is not None:
            location = f'{path}:{line}: ' if line is not None else f'{path}: '
        super().__init__(f'{location}{message}')


class UndefinedDensityError(RecommenderError):
    pass


class ProtocolError(RecommenderError):
    pass


class ArgumentError(RecommenderError):
    pass


class CheckpointError(RecommenderError):
    pass


class ModelKindMismatchError(CheckpointError):
    pass


class UnknownDealerError(RecommenderError):
    pass


class VerificationError(RecommenderError):
    pass
