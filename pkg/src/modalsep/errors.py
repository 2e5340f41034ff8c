"""Exception hierarchy for modalsep.

Each pipeline stage raises subclasses of one base so the CLI can map
failures onto exit codes.
"""


class ModalSepError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(ModalSepError):
    exit_code = 2


class DataError(ModalSepError):
    exit_code = 3


class TrainingError(ModalSepError):
    exit_code = 4


class AnalysisError(ModalSepError):
    exit_code = 5


# dynamics
class NonClassicalDamping(DataError):
    pass


class NotPositiveDefinite(DataError):
    pass


class SingularEffectiveStiffness(DataError):
    pass


# network
class ShapeMismatch(TrainingError):
    pass


class DegenerateBatch(TrainingError):
    pass


class Diverged(TrainingError):
    pass


class RankDeficient(TrainingError):
    pass


class ZeroVariance(AnalysisError):
    pass


# analysis
class TooShort(AnalysisError):
    pass


class EmptyBand(AnalysisError):
    pass


class NoTriggers(AnalysisError):
    pass


class TooFewPeaks(AnalysisError):
    pass


class ZeroVector(AnalysisError):
    pass


# ingestion
class MissingSampleRate(DataError):
    pass


class RaggedRows(DataError):
    pass


class EmptyFile(DataError):
    pass
