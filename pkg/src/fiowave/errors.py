"""Exception and warning types shared across the package."""


class FiowaveError(Exception):
    """Base class for all package errors."""


class SideMismatchError(FiowaveError):
    """A field was passed on the wrong side (physical vs spectral)."""


class GridMismatchError(FiowaveError):
    """Two objects live on different grids."""


class UnsupportedDepthError(FiowaveError):
    """A derivative of higher order than the configured depth was requested."""


class DegeneracyError(FiowaveError):
    """Characteristic roots are too close for the diagonalizer to be stable.

    Carries the offending sample point so the caller can inspect it.
    """

    def __init__(self, message, t=None, x=None, xi=None):
        super().__init__(message)
        self.t = t
        self.x = x
        self.xi = xi


class NotHyperbolicError(FiowaveError):
    """Characteristic roots have an imaginary part beyond tolerance."""


class HorizonError(FiowaveError):
    """A time beyond the validity horizon of a propagator was requested."""


class InconsistentPhaseError(FiowaveError):
    """Eikonal cancellation failed: the phases do not solve the eikonal
    equations of the system they were paired with."""


class EvaluationError(FiowaveError):
    """A symbol or phase produced a non-finite value on the lattice."""


class AdmissibilityError(FiowaveError):
    """A noise admissibility condition failed and no override was given."""


class QuadratureError(FiowaveError):
    """An adaptive quadrature failed to converge and no divergence
    signature was detected."""


class ConfigError(FiowaveError):
    """A scenario configuration failed to parse or validate."""


class CausticWarning(UserWarning):
    """Ray crossing detected; the phase is returned with a reduced horizon."""


class ZeroModeWarning(UserWarning):
    """The zero frequency mode was masked because the symbol has no
    continuous extension there."""


class DivergenceWarning(UserWarning):
    """The factorial-decay gate of the propagator series was violated."""


class AtomSnapWarning(UserWarning):
    """A spectral-measure atom was snapped to the nearest lattice mode."""
