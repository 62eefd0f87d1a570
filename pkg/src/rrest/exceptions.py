"""Exception hierarchy shared by all rrest modules."""


class RrestError(Exception):
    """Base class for every error raised by rrest."""


class DegenerateSpectrum(RrestError, ValueError):
    """Two singular values are closer than the distinctness gap."""


class RankDeficient(RrestError, ValueError):
    """The smallest singular value is at or below the rank floor."""


class BadRank(RrestError, ValueError):
    """Requested rank constraint is outside ``1 <= r < m``."""


class BadEta(RrestError, ValueError):
    """Ridge parameter must be strictly positive."""


class DimensionMismatch(RrestError, ValueError):
    pass


class SolveFailure(RrestError, ArithmeticError):
    """A positive-definite solve broke down (signals invalid input)."""


class OptimizerFailure(RrestError, RuntimeError):
    pass


class ZeroGap(RrestError, ValueError):
    """Wedin separation is zero, so the angle bound is undefined."""


class DefinitionViolated(RrestError, ValueError):
    """The pair does not satisfy the ill-conditioned/high-SNR conditions."""


class RejectionExhausted(RrestError, RuntimeError):
    """Scenario generation hit ``max_rejects`` without an acceptable draw."""
