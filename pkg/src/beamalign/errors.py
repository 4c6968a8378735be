"""Shared exception types."""


class BeamAlignError(Exception):
    """Base class for errors raised by this package."""


class C1Violation(BeamAlignError):
    """A measurement-matrix row needs more simultaneous beams than RF chains."""


class C1Infeasible(BeamAlignError):
    """Requested code parameters cannot satisfy the row-sparsity constraint."""


class MLessThanK(BeamAlignError):
    """Probability formulas require at least as many right nodes as active nodes."""


class ConfigError(BeamAlignError):
    """Invalid experiment configuration (CLI maps this to exit code 2)."""
