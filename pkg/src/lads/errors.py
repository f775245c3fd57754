"""Exception hierarchy shared by every lads module."""

from __future__ import annotations


class LadsError(Exception):
    """Base class for all lads failures."""


# --- session ---------------------------------------------------------------

class EmptyQuery(LadsError):
    pass


class NoDatasetBound(LadsError):
    pass


class TurnInProgress(LadsError):
    """A second turn was started while the session is RUNNING."""


class SessionEnded(LadsError):
    pass


class LoopBudgetExhausted(LadsError):
    """The fix loop ran out of iterations without a VALID verdict.

    Carries the best artifact produced so far, flagged as unvalidated.
    """

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


# --- gateway ---------------------------------------------------------------

class GatewayError(LadsError):
    pass


class GatewayTimeout(GatewayError):
    pass


class UnknownTemplate(GatewayError):
    pass


class MissingBinding(GatewayError):
    def __init__(self, name: str):
        super().__init__(f"missing required binding: {name}")
        self.name = name


class UnparseableToken(GatewayError):
    pass


class UnparseableDecision(GatewayError):
    pass


class MalformedJson(GatewayError):
    pass


class MissingKeys(GatewayError):
    def __init__(self, keys):
        self.keys = frozenset(keys)
        super().__init__(f"response JSON is missing keys: {sorted(self.keys)}")


# --- dataset intake --------------------------------------------------------

class DatasetLoadError(LadsError):
    pass


class UnsupportedFormat(DatasetLoadError):
    def __init__(self, extension: str):
        super().__init__(f"unsupported dataset format: {extension!r}")
        self.extension = extension


class ParseError(DatasetLoadError):
    pass


class TooFewRows(LadsError):
    pass


# --- reflection / planning -------------------------------------------------

class SectionMissing(LadsError):
    def __init__(self, sections):
        self.sections = list(sections)
        super().__init__(f"could not locate sections: {self.sections}")


class UnresolvedReflection(LadsError):
    pass


# --- codegen ---------------------------------------------------------------

class NoCodeBlock(LadsError):
    pass


# --- automl ----------------------------------------------------------------

class InvalidConfig(LadsError):
    pass


class UnknownEngine(LadsError):
    pass


class CapabilityMismatch(LadsError):
    pass


# --- sandbox ---------------------------------------------------------------

class SandboxSetupError(LadsError):
    pass


# --- benchmarking ----------------------------------------------------------

class NegativeLossScore(LadsError):
    pass


class UnknownMetric(LadsError):
    pass


# --- reporting -------------------------------------------------------------

class MissingSections(LadsError):
    def __init__(self, sections):
        self.sections = list(sections)
        super().__init__(f"report is missing sections: {self.sections}")


class NoModelArtifact(LadsError):
    pass
