class ConvergenceError(RuntimeError):
    """An iterative solver ran out of budget; ``residual`` holds the last value."""

    def __init__(self, message, residual=float("nan"), payload=None):
        super().__init__(message)
        self.residual = residual
        self.payload = payload


class CFLError(ValueError):
    """Requested time step exceeds the stability bound ``admissible_dt``."""

    def __init__(self, message, admissible_dt):
        super().__init__(message)
        self.admissible_dt = admissible_dt


class FitError(ValueError):
    """A log-log fit was requested on data that cannot support it."""
