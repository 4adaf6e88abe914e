"""Exception hierarchy shared by the solver modules and the CLI."""


class StackpriceError(Exception):
    """Base class for all library errors."""


class StructuralError(StackpriceError, ValueError):
    """Matrix dimensions do not fit together.

    ``where`` names the offending field, e.g. ``followers[1].G``.
    """

    def __init__(self, where, message):
        super().__init__(f"{where}: {message}")
        self.where = where


class GameValidationError(StackpriceError):
    """A game violates one of the standing assumptions."""

    def __init__(self, report):
        failed = [c for c in report.checks if not c.passed]
        lines = "; ".join(f"{c.name} [{c.where}] {c.detail}" for c in failed)
        super().__init__(f"game validation failed: {lines}")
        self.report = report


class MonotonicityError(StackpriceError):
    """The pseudo-gradient is not strongly monotone (F1 not positive definite)."""


class InfeasibleError(StackpriceError):
    """A polyhedron or a quadratic program has no feasible point."""


class RankError(StackpriceError, ValueError):
    """Constraint rows are linearly dependent.

    ``rows`` lists the indices that are dependent on earlier rows.
    """

    def __init__(self, message, rows=()):
        super().__init__(message)
        self.rows = list(rows)


class ConvergenceError(StackpriceError):
    """An iterative method hit its iteration cap.

    ``history`` carries the residual sequence when one is available.
    """

    def __init__(self, message, residual=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = [] if history is None else list(history)


class InfeasiblePointError(StackpriceError):
    """A point violates a constraint by more than the active-set tolerance."""


class StaleEquilibriumError(StackpriceError):
    """Stationarity cannot be certified at the supplied equilibrium."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class SingularKKTError(StackpriceError):
    """The reduced KKT matrix is numerically singular."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class StalledStepError(StackpriceError):
    """Armijo backtracking exceeded its exponent cap."""


class UnreliableStencilError(StackpriceError):
    """A finite-difference stencil crossed an active-set change."""


class ScenarioError(StackpriceError, ValueError):
    """A charging scenario cannot be mapped to a valid pricing game."""


class GameFileError(StackpriceError, ValueError):
    """A game file violates the schema. ``path`` is the JSON field path."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class BudgetError(StackpriceError, ValueError):
    """A grid search would exceed its evaluation budget."""
