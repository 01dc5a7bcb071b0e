"""Exception types shared across the planner pipeline."""


class ChasePlanError(Exception):
    """Base class for all planner errors."""


class ScenarioError(ChasePlanError):
    """Scenario file failed to parse or violates an invariant."""


class OutOfBoundsError(ChasePlanError):
    """A query point lies outside the voxel grid."""


class PlanningInfeasibleError(ChasePlanError):
    """No feasible waypoint sequence exists for the current window.

    `layer` names the first empty candidate layer when that is the cause,
    otherwise it is None and the graph simply has no source-to-goal path.
    """

    def __init__(self, message: str, layer: int | None = None):
        super().__init__(message)
        self.layer = layer


class CorridorCollapseError(ChasePlanError):
    """Clearance at an interpolated plan point is too small to fit a corridor box."""

    def __init__(self, message: str, tau: float, segment: int | None = None):
        super().__init__(message)
        self.tau = tau
        self.segment = segment


class QPError(ChasePlanError):
    """Base class for quadratic-program solver failures."""


class QPInfeasibleError(QPError):
    """The constraint set of the QP is empty."""


class QPIterationLimitError(QPError):
    """Active-set iteration limit reached; residuals attached for diagnosis."""

    def __init__(self, message: str, residuals: dict | None = None):
        super().__init__(message)
        self.residuals = residuals or {}


class MissionStageError(ChasePlanError):
    """A pipeline stage failed during a mission; carries stage provenance."""

    def __init__(self, stage: str, trigger_time: float, cause: Exception, partial_log=None):
        super().__init__(f"stage '{stage}' failed at trigger t={trigger_time:.3f}: {cause}")
        self.stage = stage
        self.trigger_time = trigger_time
        self.cause = cause
        self.partial_log = partial_log
