"""Exception hierarchy shared by every module.

Each error carries a stable machine ``code`` so the HTTP layer can map
exceptions one-to-one onto wire error codes without string matching.
"""

from __future__ import annotations


class CaseflowError(Exception):
    """Base class; ``code`` is the stable machine-readable identifier."""

    code = "INTERNAL"
    http_status = 500

    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.__name__)
        self.message = message or self.__class__.__name__


# --- parsing / loading -------------------------------------------------

class ParseError(CaseflowError):
    code = "PARSE_ERROR"
    http_status = 400


class CycleError(CaseflowError):
    code = "CYCLE_ERROR"
    http_status = 400


class MultipleRoots(CaseflowError):
    code = "MULTIPLE_ROOTS"
    http_status = 400


class UnknownNode(CaseflowError):
    code = "UNKNOWN_NODE"
    http_status = 404


class UnresolvedReference(CaseflowError):
    code = "UNRESOLVED_REFERENCE"
    http_status = 400


# --- model structure ---------------------------------------------------

class NoParent(CaseflowError):
    code = "NO_PARENT"
    http_status = 400


class NoFinal(CaseflowError):
    code = "NO_FINAL"
    http_status = 422


class MultipleFinal(CaseflowError):
    code = "MULTIPLE_FINAL"
    http_status = 422


# --- episode engine ----------------------------------------------------

class InvalidBinding(CaseflowError):
    code = "INVALID_BINDING"
    http_status = 422


class EpisodeTerminated(CaseflowError):
    code = "EPISODE_TERMINATED"
    http_status = 409


class NotReady(CaseflowError):
    code = "NOT_READY"
    http_status = 409


class NotSimple(CaseflowError):
    code = "NOT_SIMPLE"
    http_status = 409


class NotActive(CaseflowError):
    code = "NOT_ACTIVE"
    http_status = 409


class NotComplete(CaseflowError):
    code = "NOT_COMPLETE"
    http_status = 409


class IncompleteGoals(CaseflowError):
    code = "INCOMPLETE_GOALS"
    http_status = 422


class CorruptLog(CaseflowError):
    code = "CORRUPT_LOG"
    http_status = 400


class UnknownActivity(CaseflowError):
    code = "UNKNOWN_ACTIVITY"
    http_status = 404


# --- workspace ---------------------------------------------------------

class UnknownEntity(CaseflowError):
    code = "UNKNOWN_ENTITY"
    http_status = 404


class OpPreconditionFailed(CaseflowError):
    code = "OP_PRECONDITION_FAILED"
    http_status = 422


class OutOfRange(CaseflowError):
    code = "OUT_OF_RANGE"
    http_status = 400


# --- adaptation --------------------------------------------------------

class IntegrityError(CaseflowError):
    """Rejected discretion edit; ``rule`` identifies the violated check."""

    code = "INTEGRITY_ERROR"
    http_status = 422

    def __init__(self, rule: str, message: str = ""):
        super().__init__(message or rule)
        self.rule = rule


class NotEditable(CaseflowError):
    code = "NOT_EDITABLE"
    http_status = 409


class NoDependencyPath(CaseflowError):
    code = "NO_DEPENDENCY_PATH"
    http_status = 422


# --- episode base ------------------------------------------------------

class DuplicateArchive(CaseflowError):
    code = "DUPLICATE_ARCHIVE"
    http_status = 409


class UnknownEpisode(CaseflowError):
    code = "UNKNOWN_EPISODE"
    http_status = 404


class PartialArchive(CaseflowError):
    code = "PARTIAL_ARCHIVE"
    http_status = 409


# --- agent pool --------------------------------------------------------

class DuplicateId(CaseflowError):
    code = "DUPLICATE_ID"
    http_status = 409


class CompositionCycle(CaseflowError):
    code = "COMPOSITION_CYCLE"
    http_status = 422


class UnknownAgent(CaseflowError):
    code = "UNKNOWN_AGENT"
    http_status = 404


class ContractViolation(CaseflowError):
    code = "CONTRACT_VIOLATION"
    http_status = 422


class ConstituentFailure(CaseflowError):
    code = "CONSTITUENT_FAILURE"
    http_status = 502

    def __init__(self, constituent: str, message: str = ""):
        super().__init__(message or f"constituent {constituent} failed")
        self.constituent = constituent


# --- service -----------------------------------------------------------

class BadConfig(CaseflowError):
    code = "BAD_CONFIG"
    http_status = 400
