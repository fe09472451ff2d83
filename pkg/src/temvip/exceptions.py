"""Exception and warning types shared across the package."""


class TemvipError(Exception):
    """Base class for all errors raised by this package."""


# ---------------------------------------------------------------------------
# data validation / preprocessing

class EmptyData(TemvipError):
    pass


class NonFiniteData(TemvipError):
    pass


class BadTreatmentCode(TemvipError):
    pass


class SurvivalGridViolation(TemvipError):
    pass


class AllColumnsDropped(TemvipError):
    pass


class DegenerateOutcome(TemvipError):
    pass


class NonPositiveTime(TemvipError):
    pass


class PositiveOutcomeRequired(TemvipError):
    pass


# ---------------------------------------------------------------------------
# learners and nuisance fitting

class OneClassOnly(TemvipError):
    pass


class AllLearnersFailed(TemvipError):
    pass


class NoEventsBeforeHorizon(TemvipError):
    pass


class GridExceeded(TemvipError):
    pass


class TiltDiverged(TemvipError):
    pass


# ---------------------------------------------------------------------------
# CSV front end

class MissingColumn(TemvipError):
    pass


class CsvParseError(TemvipError):
    def __init__(self, row, column, message=None):
        self.row = row
        self.column = column
        super().__init__(message or f"unparseable or missing cell at row {row}, column {column!r}")


class NoCovariates(TemvipError):
    pass


# ---------------------------------------------------------------------------
# warnings (recoverable conditions; recorded in run manifests)

class TemvipWarning(UserWarning):
    """Base class for recoverable numerical conditions."""


class NoConvergenceWarning(TemvipWarning):
    pass


class SeparationWarning(TemvipWarning):
    pass


class TruncationWarning(TemvipWarning):
    pass


class FloorAppliedWarning(TemvipWarning):
    pass


class CensoringPositivityWarning(TemvipWarning):
    pass


class HazardBoundaryWarning(TemvipWarning):
    pass


class TiltMaxIterWarning(TemvipWarning):
    pass


class DegenerateVarianceWarning(TemvipWarning):
    pass
