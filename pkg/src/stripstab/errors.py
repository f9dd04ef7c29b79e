"""Exception hierarchy shared by the toolkit."""


class StripStabError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(StripStabError, ValueError):
    pass


class DomainError(StripStabError, ValueError):
    pass


class ShapeError(StripStabError, ValueError):
    pass


class ProfileError(StripStabError):
    pass


class NumericalError(StripStabError):
    pass


class ContinuationError(NumericalError):
    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good


class ResolventAtEigenvalueError(NumericalError):
    pass


class DegenerateRootsError(NumericalError):
    pass


class BoundarySolveError(NumericalError):
    pass


class NoContractionError(NumericalError):
    pass


class BracketError(NumericalError):
    pass


class AmbiguityError(BracketError):
    def __init__(self, message, crossings=()):
        super().__init__(message)
        self.crossings = list(crossings)


class FitDomainError(StripStabError, ValueError):
    pass


class AdjointDegenerateError(NumericalError):
    pass


class InconsistencyError(NumericalError):
    pass


class ResonanceError(NumericalError):
    pass


class PreconditionError(StripStabError, ValueError):
    pass


class DegenerateError(NumericalError):
    pass


class StabilityError(StripStabError, ValueError):
    pass


class ReconstructionError(StripStabError):
    pass


class PipelineError(StripStabError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
