"""Exception hierarchy. Each base class maps to a CLI exit code."""

from __future__ import annotations


class GafnirsError(Exception):
    exit_code = 1


class ConfigError(GafnirsError):
    exit_code = 2


class DataError(GafnirsError):
    exit_code = 3


class NumericError(GafnirsError):
    exit_code = 4


class MissingColumn(DataError):
    def __init__(self, column: str, path: str = ""):
        self.column = column
        self.path = path
        super().__init__(f"{path}: missing column {column!r}")


class NonNumericCell(DataError):
    def __init__(self, row: int, col: str, value: str, path: str = ""):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(f"{path}: row {row}, column {col!r}: non-numeric value {value!r}")


class MarkerOutOfBounds(DataError):
    def __init__(self, onset: int, length: int, detail: str = ""):
        self.onset = onset
        self.length = length
        super().__init__(f"marker at sample {onset} does not fit the epoch window "
                         f"in a series of {length} samples{detail}")


class SingularCoefficients(NumericError):
    pass


class InvalidBand(ConfigError):
    pass


class SeriesTooShort(DataError):
    pass


class EmptySeries(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class TargetTooLarge(ConfigError):
    pass


class DimensionMismatch(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class EmptyDataset(DataError):
    pass


class NumericalInstability(NumericError):
    pass


class TooFewSamples(DataError):
    pass


class DegenerateClass(DataError):
    pass


class CorruptModel(DataError):
    pass
