"""Exception taxonomy shared across the library.

Invalid arguments (wrong shapes, violated preconditions the caller controls)
raise plain ValueError; everything below reports a runtime condition of the
data or the numerics.
"""


class NumericalFailure(RuntimeError):
    """An iterative numerical routine failed to converge."""


class NotPositiveDefinite(NumericalFailure):
    """Cholesky hit a non-positive pivot; carries the pivot index."""

    def __init__(self, pivot_index: int, pivot_value: float):
        super().__init__(
            f"matrix not positive definite: pivot {pivot_index} = {pivot_value:.3e}"
        )
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value


class SingularMatrix(NumericalFailure):
    """Gaussian elimination found a pivot below the singularity threshold."""


class DegenerateConfiguration(RuntimeError):
    """Geometric input admits no unique solution (coplanar, parallel rays, ...)."""


class CheiralityFailure(RuntimeError):
    """No pose candidate places the points in front of the cameras."""


class ConsensusFailure(RuntimeError):
    """RANSAC found fewer inliers than the required minimum."""

    def __init__(self, best_inliers: int, min_inliers: int):
        super().__init__(f"consensus failure: {best_inliers} < {min_inliers} inliers")
        self.best_inliers = best_inliers
        self.min_inliers = min_inliers


class DataGap(RuntimeError):
    """Gap between consecutive IMU samples exceeds the allowed maximum."""


class ReintegrationRequired(RuntimeError):
    """Bias delta too large for a first-order correction; re-integrate instead."""


class OptimizerAbort(RuntimeError):
    """Optimization produced a non-finite cost."""


class InsufficientOverlap(RuntimeError):
    """Too few temporally associated pose pairs between two trajectories."""


class NoSegments(RuntimeError):
    """Ground-truth path is shorter than the requested segment length."""


class ParseError(ValueError):
    """Malformed dataset row; carries the path and 1-based line number."""

    def __init__(self, path, line_number: int, message: str):
        super().__init__(f"{path}:{line_number}: {message}")
        self.path = path
        self.line_number = line_number
