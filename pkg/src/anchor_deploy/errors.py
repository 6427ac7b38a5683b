"""Exception hierarchy shared by the solvers, the planner and the CLI."""


class AnchorDeployError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateGeometryError(AnchorDeployError):
    """Anchor geometry cannot support the requested computation
    (coincident points, collinear anchors, rank-deficient design)."""


class ConditioningError(AnchorDeployError):
    """A matrix is too ill-conditioned to invert reliably."""


class CoverageGapError(AnchorDeployError):
    """Fewer than four anchors are within ranging distance of a query point."""

    def __init__(self, found: int, message: str | None = None):
        self.found = found
        super().__init__(message or f"only {found} anchor(s) within range, need 4")


class ConvergenceError(AnchorDeployError):
    """An iterative solver hit its iteration cap; ``best`` holds the best iterate."""

    def __init__(self, message: str, best=None):
        self.best = best
        super().__init__(message)


class InfeasibleRegionError(AnchorDeployError):
    """No placement with at most four anchors satisfies the constraints."""

    def __init__(self, message: str, viapoint: int | None = None):
        self.viapoint = viapoint
        super().__init__(message)


class ProtocolError(AnchorDeployError):
    """An event was delivered to the state machine in a state that cannot accept it."""


class ScenarioError(AnchorDeployError):
    """A scenario document failed validation."""
