"""Exception types shared across the package."""


class JacdynError(Exception):
    """Base class for all package errors."""


class BranchBracketError(JacdynError):
    """A monotone branch failed to bracket a preimage root."""


class NodeCapExceededError(JacdynError):
    """A requested computation would exceed the configured node cap."""


class RootRefinementError(JacdynError):
    """Refined preimage nodes failed the residual tolerance check."""


class OverlappingIntervalsError(JacdynError):
    """Components of a pullback interval system overlap (broken expansion)."""


class EmptyCoverIntersectionError(JacdynError):
    """Query interval misses the deepest-level cover; caller should fall back
    to gap-endpoint handling."""


class WeightUnderflowError(JacdynError):
    """Normalized measure weights underflow double precision."""


class DuplicateNodesError(JacdynError):
    """Measure nodes coincide below resolvable separation."""


class PoleError(JacdynError):
    """Resolvent evaluated at (numerically) an eigenvalue."""


class SpectrumEscapeError(JacdynError):
    """Input matrix spectrum leaves the required interval."""


class ConfigError(JacdynError):
    """Invalid experiment configuration."""
