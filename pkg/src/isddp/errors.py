"""Exception types shared across the package."""


class IsddpError(Exception):
    """Base class for all errors raised by this package."""


class InstanceError(IsddpError):
    """Instance data is malformed (syntax, shapes, probabilities, bounds).

    ``path`` locates the offending element, e.g. "stages[1].realizations[0].b".
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class Infeasible(IsddpError):
    "Raised when a subproblem (or the extensive form) has no feasible point."


class Unbounded(IsddpError):
    "Raised when a subproblem is unbounded below."


class MaxPivots(IsddpError):
    "Raised when the simplex kernel exhausts its pivot budget."


class NumericalTrouble(IsddpError):
    "Raised when the kernel cannot keep a usable basis factorization."


class NoInteriorPoint(IsddpError):
    "Raised when the relative-interior feasibility check fails."


class SlaterCheckFailed(IsddpError):
    "Raised when no strictly feasible point exists for the inequality system."


class NegativeMultiplier(IsddpError):
    "Raised when an inequality multiplier is negative beyond tolerance."


class TooLarge(IsddpError):
    "Raised when a brute-force computation would exceed its size guard."


class BoundViolation(IsddpError):
    "Raised when a certified bound on cut distances fails to hold."


class SolverFailure(IsddpError):
    """Wraps a solver error with the iteration context it occurred in."""

    def __init__(self, cause, iteration=None, stage=None, realization=None):
        self.cause = cause
        self.iteration = iteration
        self.stage = stage
        self.realization = realization
        where = []
        if iteration is not None:
            where.append(f"iteration {iteration}")
        if stage is not None:
            where.append(f"stage {stage}")
        if realization is not None:
            where.append(f"realization {realization}")
        ctx = ", ".join(where) or "solver"
        super().__init__(f"{type(cause).__name__} at {ctx}: {cause}")
