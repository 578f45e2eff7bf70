"""Exception types shared across the package.

Validation failures (bad inputs, malformed files) are distinct from
computation failures (singular matrices, infeasible grids) so the CLI can
map them to usage (2) versus computation (1) exit codes.
"""


class ValidationError(ValueError):
    """Input rejected before any computation started."""


class ShapeMismatch(ValidationError):
    """Array dimensions disagree with the declared problem size."""


class MismatchedGeneSets(ValidationError):
    """Populations do not share an identical gene set."""


class NotATree(ValidationError):
    """Edge list is not a connected, acyclic spanning tree with positive weights."""


class NonFiniteInput(ValidationError):
    """NaN or infinity encountered in numeric input."""


class ComputationError(RuntimeError):
    """Computation failed on validated inputs."""


class SingularAfterJitter(ComputationError):
    """Thresholded covariance stayed non-PD through the whole jitter schedule."""


class NotPositiveDefinite(ComputationError):
    """A matrix required to be positive definite is not."""


class TooLargeForOracle(ValidationError):
    """Brute-force enumeration refused: 2^K is past the guard."""


class InsufficientZeroPositions(ComputationError):
    """Categorical generator ran out of empty block-internal slots for new edges."""


class AllConfigurationsInfeasible(ComputationError):
    """Every grid tuple scored +inf during model selection."""
