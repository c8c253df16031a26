"""Exception types shared across the solver suite.

Everything derives from TwavesError so callers can catch the whole family
with one clause.  Solvers raise these instead of returning sentinel values.
"""


class TwavesError(Exception):
    """Base class for all errors raised by this package."""


# --- model layer ---

class NoBackgroundRoot(TwavesError):
    """No positive root of the nonlinearity with negative slope was found."""


class DegenerateRoot(TwavesError):
    """The candidate background root has vanishing slope, F'(r0^2) ~ 0."""


class DegenerateSoundSpeed(TwavesError):
    """The squared sound speed came out non-positive."""


# --- spectral layer ---

class SizeMismatch(TwavesError):
    """Array shape does not match the grid it is claimed to live on."""


class NonRealResult(TwavesError):
    """A multiplier that should map real fields to real fields did not."""


class NotZeroMean(TwavesError):
    """A field that must have zero mean along the first axis does not."""


class GridMismatch(TwavesError):
    """Two fields that must share a grid do not."""


class BoxNotCommensurate(TwavesError):
    """The box was not generated by the slow-variable scaling convention."""


# --- ground-state solvers ---

class DegenerateGamma(TwavesError):
    """The effective cubic coefficient vanishes; no quadratic wave theory."""


class ZeroInitialGuess(TwavesError):
    """An initial guess with zero norm was supplied."""


class DivergedIteration(TwavesError):
    """The normalization factor drifted too far from one."""


class UnsupportedDimension(TwavesError):
    """Requested dimension is outside the supported range."""


class DivisionByZero(TwavesError):
    """A denominator in a diagnostic ratio is numerically zero."""


class NotConverged(TwavesError):
    """An estimate was requested from a state that fails its precondition."""


# --- travelling-wave solvers ---

class BoundaryMismatch(TwavesError):
    """Field does not settle to the background near the box boundary."""


class VortexDetected(TwavesError):
    """The modulus dipped at or below half the background amplitude."""


class NewtonDiverged(TwavesError):
    """Newton iteration for the modulus profile failed to converge."""


class SupersonicSpeed(TwavesError):
    """Requested speed is outside the admissible subsonic window."""


class SonicDegenerate(TwavesError):
    """Speed is so close to sonic that the scaling degenerates."""


class ConstraintLost(TwavesError):
    """The kinetic-norm constraint was violated beyond tolerance."""


class Stalled(TwavesError):
    """Line search could not make progress."""


class NoPositiveRoot(TwavesError):
    """The stretch projection has no positive root."""


class Diverged(TwavesError):
    """A fixed-point iteration increased its residual persistently."""


class LiftingLost(TwavesError):
    """The modulus lost positivity, so the phase lift is meaningless."""


# --- fits and sweeps ---

class InsufficientPoints(TwavesError):
    """Not enough sweep points for a meaningful regression."""


# --- configuration ---

class ParseError(TwavesError):
    """Config file or flag value could not be parsed."""


class ValidationError(TwavesError):
    """Parsed configuration violates a documented constraint."""
