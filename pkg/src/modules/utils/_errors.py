from typing import Optional


class SkelFallError(Exception):
    """
    Base error. Every subclass owns the process exit code the CLI reports for it.

    :param message: Human readable description, kept on one line.
    """

    code: int = 1

    def __init__(self, message: str) -> None:
        super().__init__(message)
        self.message = message

    def __str__(self) -> str:
        return self.message


class DimensionError(SkelFallError, ValueError):
    code = 1


class LabelError(SkelFallError, ValueError):
    code = 1


class ParameterError(SkelFallError, ValueError):
    code = 2


class SchemaError(SkelFallError, ValueError):
    code = 2


class MissingFileError(SkelFallError, FileNotFoundError):
    code = 3


class ConfigurationError(SkelFallError):
    code = 6


class TopologyError(SkelFallError, ValueError):
    code = 6


class TopologyMismatchError(ConfigurationError):
    code = 4


class FormatError(SkelFallError, ValueError):
    code = 5

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None) -> None:
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(f"{where}{message}")
        self.path = path
        self.line = line


class EmptySampleError(FormatError):
    code = 5


class UndefinedMetricError(SkelFallError, ValueError):
    code = 1


class TrainingAbortedError(SkelFallError, RuntimeError):
    code = 7
