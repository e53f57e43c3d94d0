"""Exception hierarchy.

Three top-level classes map to CLI exit codes; everything numerical the
library can raise derives from NumericError so callers can catch one class.
"""


class ConfigError(Exception):
    """Bad configuration, flags, or parameter files."""

    exit_code = 2


class DataError(Exception):
    """Input data that cannot support the requested computation."""

    exit_code = 3


class NumericError(Exception):
    """Numerical failure inside a solver, optimizer, or transform."""

    exit_code = 4


class DomainError(NumericError):
    """Argument outside the validity region of a transform or map."""


class StripViolation(DomainError):
    """Complex argument left the strip where a Laplace transform is defined."""


class SingularMatrix(NumericError):
    """A matrix that must be invertible is singular."""


class ExplosionGuard(NumericError):
    """Simulated event count exceeded the configured cap."""


class NumericDomain(NumericError):
    """An intermediate quantity left its admissible range (e.g. intensity <= 0)."""


class NonConvergence(NumericError):
    """Optimizer failed to converge within its iteration budget."""


class StepFailure(NumericError):
    """Adaptive integrator hit its minimum step size."""


class QuadratureFailure(NumericError):
    """Quadrature refinement budget exhausted without meeting tolerance."""


class OutOfBounds(NumericError):
    """Price outside no-arbitrage bounds; implied volatility undefined."""


class RankDeficient(NumericError):
    """Regressor matrix is rank deficient."""


class InfeasibleRegion(NumericError):
    """Every optimizer start failed; no feasible point found."""


class DegenerateSample(DataError):
    """Sample too small or degenerate for the requested statistic."""


class EmptySide(DataError):
    """No jump events on one side where at least one is required."""
