"""Exception types raised by the toolkit.

Every error derives from :class:`FLMicroError` so callers can catch the
whole family at once; the CLI maps these to exit status 2.
"""

from __future__ import annotations


class FLMicroError(Exception):
    """Base class for all toolkit errors."""


# newton_polyhedron
class RejectNotComplete(FLMicroError):
    """Vertex set does not describe a complete polyhedron."""


class RejectDimension(FLMicroError):
    """Dimension outside the supported range (n <= 3)."""


# weights
class BadParam(FLMicroError):
    """Weight family parameter out of range."""


class PlanTooSmall(FLMicroError):
    """Sampling plan has fewer than two refinement levels."""


class StepTooCoarse(FLMicroError):
    """Finite-difference step exceeds the slowly varying radius."""


# grid_fourier
class GridMismatch(FLMicroError):
    """Operands live on incompatible grids."""


# pdo
class UnboundedSymbol(FLMicroError):
    """Symbol takes a non-finite value on the grid."""


class EmptyProbeSet(FLMicroError):
    """No grid frequencies satisfy the probe constraint."""


class DivergentConstant(FLMicroError):
    """The integral constant of an estimate is infinite."""


class AliasRisk(FLMicroError):
    """Spectral support too wide for an alias-free product."""


class SeriesDiverges(FLMicroError):
    """Majorant series does not reach the truncation tolerance."""


class MissingZeroConstantTerm(FLMicroError):
    """Entire function with a nonzero constant term."""


class NotElliptic(FLMicroError):
    """Symbol failed the ellipticity check."""


# microlocal
class NotFound(FLMicroError):
    """No epsilon in the search schedule satisfies the inclusion."""


class NotMConic(FLMicroError):
    """Set is not closed under anisotropic dilations."""


class ConstructionFailed(FLMicroError):
    """Cutoff symbol failed an a posteriori check."""


class EmptyMask(FLMicroError):
    """Neighborhood mask empty at every scheduled epsilon."""


class PreconditionChainBroken(FLMicroError):
    """Weight chain sigma <= lambda <= Lambda <= lambda^2/sigma fails."""


# propagation
class BadStep(FLMicroError):
    """Non-positive bootstrap step."""


class ConstraintViolated(FLMicroError):
    """Exponent constraints of the semilinear gain are violated."""


class BadK(FLMicroError):
    """Parameter k outside (0, 1)."""


class HypothesisViolated(FLMicroError):
    """Threshold formula hypothesis fails."""


class CaseMismatch(FLMicroError):
    """Requested threshold case disagrees with the integrality test."""
