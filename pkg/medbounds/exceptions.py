"""
medbounds Exceptions

Every user-facing failure derives from MedboundsError and carries the CLI
exit code for its family.
"""


class MedboundsError(Exception):
    """Base class for all medbounds errors."""

    exit_code = 1

    def as_record(self):
        """Machine-readable error record for error.json."""
        return {
            "error": type(self).__name__,
            "family": next(
                (cls.__name__ for cls in type(self).__mro__ if cls in _FAMILIES),
                "MedboundsError",
            ),
            "message": str(self),
            "exit_code": self.exit_code,
        }


# Config
class ConfigError(MedboundsError):
    exit_code = 2


class CalibrationError(ConfigError):
    pass


class InvalidSource(CalibrationError):
    pass


class RankOutOfRange(CalibrationError):
    pass


# Data
class DataError(MedboundsError):
    exit_code = 3


class MissingColumn(DataError):
    pass


class NonBinaryTreatment(DataError):
    pass


class NonBinarySelection(DataError):
    pass


class OutcomeMissingWhileSelected(DataError):
    pass


class MissingValues(DataError):
    pass


class EmptyArm(DataError):
    pass


class DimensionOverflow(DataError):
    pass


class EmptyRetainedSet(DataError):
    pass


# Numerics
class NumericalError(MedboundsError):
    exit_code = 4


class RankDeficient(NumericalError):
    pass


class AllSameResponse(NumericalError):
    pass


class DegenerateWeights(NumericalError):
    pass


class DegenerateProbability(NumericalError):
    pass


class Infeasible(NumericalError):
    pass


class Numerics(NumericalError):
    pass


class ZeroNormalizer(NumericalError):
    pass


class GridTooLarge(NumericalError):
    pass


class TooManyFailedReplications(NumericalError):
    pass


class NonMonotoneStep(AssertionError):
    """Internal: an LP sub-step worsened the objective. Always a bug."""


_FAMILIES = (ConfigError, DataError, NumericalError)


def throw(message, exc=MedboundsError):
    """Raise `exc` with `message`."""
    raise exc(message)
