class SolverError(RuntimeError):
    """Base class for optimisation failures that callers may recover from."""


class InfeasibleError(SolverError):
    pass


class NodeBudgetError(SolverError):
    pass
