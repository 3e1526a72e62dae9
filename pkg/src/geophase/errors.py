"""Exception types raised across the package."""


class GeophaseError(Exception):
    """Base class for all library errors."""


class NonHermitianInput(GeophaseError, ValueError):
    pass


class AmbiguousBranch(GeophaseError):
    """Max-overlap branch assignment could not be decided; refine the grid."""


class StepSizeUnderflow(GeophaseError):
    pass


class OrthogonalStates(GeophaseError, ValueError):
    pass


class OrthogonalEndpoints(OrthogonalStates):
    """Initial and final states are orthogonal, so the phase is undefined."""


class CoarsePath(GeophaseError, ValueError):
    pass


class DegenerateSpectrum(GeophaseError):
    pass


class RankMismatch(GeophaseError, ValueError):
    pass


class EmptyEnsemble(GeophaseError, ValueError):
    pass


class BlockViolation(GeophaseError, ValueError):
    pass


class DomainError(GeophaseError, ValueError):
    pass


class InvalidPolarization(GeophaseError, ValueError):
    pass


class InvalidState(GeophaseError, ValueError):
    pass


class QuadratureFailure(GeophaseError):
    pass


class NoDecay(GeophaseError):
    pass


class BranchError(GeophaseError):
    """Square-root branch of a radicand could not be fixed unambiguously."""


class StepTooLarge(GeophaseError, ValueError):
    pass


class SingularPath(GeophaseError):
    pass


class NoConvergence(GeophaseError):
    pass


class ConfigError(GeophaseError, ValueError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
