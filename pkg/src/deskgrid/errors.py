"""Exception types shared across the deskgrid stack."""


class DeskgridError(Exception):
    """Base class for all deskgrid errors."""


# --- environment ---

class UnknownVerifier(DeskgridError):
    pass


class InvalidTask(DeskgridError):
    pass


class EpisodeFinished(DeskgridError):
    pass


class IncompleteTrajectory(DeskgridError):
    pass


# --- api generation ---

class BackendUnavailable(DeskgridError):
    pass


class GenerationRejected(DeskgridError):
    pass


class ExhaustedRepairs(DeskgridError):
    def __init__(self, message, reports=None):
        super().__init__(message)
        self.reports = reports or []


# --- cluster ---

class DuplicateLiveWorker(DeskgridError):
    pass


class UnknownWorker(DeskgridError):
    pass


class NoCapacity(DeskgridError):
    pass


class SessionLost(DeskgridError):
    pass


class RequestTimeout(DeskgridError):
    pass


class BindFailure(DeskgridError):
    pass


class ControllerUnreachable(DeskgridError):
    pass


class ClusterUnavailable(DeskgridError):
    pass


# --- replay ---

class VersionRegression(DeskgridError):
    pass


# --- policy ---

class EmptyCandidates(DeskgridError):
    pass


class ActionNotCandidate(DeskgridError):
    pass


class CheckpointCorrupt(DeskgridError):
    pass


# --- trainer ---

class MixedTasks(DeskgridError):
    pass


class GroupTooSmall(DeskgridError):
    pass


class MissingOldLogProb(DeskgridError):
    pass


class NonFiniteGradient(DeskgridError):
    pass


# --- entropulse / bc ---

class EmptyStore(DeskgridError):
    pass


class SeriesTooShort(DeskgridError):
    pass


class AbortedByOperator(DeskgridError):
    pass


class MissingTask(DeskgridError):
    pass


class NoSuccessfulSeed(DeskgridError):
    pass


# --- config ---

class ConfigError(DeskgridError):
    pass
