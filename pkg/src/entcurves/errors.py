"""Exception types shared across the package."""


class EntCurvesError(Exception):
    """Base class for all package errors."""


class InvariantError(EntCurvesError, ValueError):
    """An input object violates one of its structural invariants."""


class PoleError(EntCurvesError, ValueError):
    """Evaluation requested too close to a lattice point.

    Attributes
    ----------
    lattice_point : complex
        The nearest lattice point.
    """

    def __init__(self, message: str, lattice_point: complex):
        super().__init__(message)
        self.lattice_point = lattice_point


class TermOverflowError(EntCurvesError, OverflowError):
    """A bump-power term exceeds the floating range at the requested point."""

    def __init__(self, message: str, term: str):
        super().__init__(message)
        self.term = term


class RungeError(EntCurvesError):
    """Polynomial approximation failed to meet its tolerance."""

    def __init__(self, message: str, best_sup_norms: list[float], degree: int):
        super().__init__(message)
        self.best_sup_norms = best_sup_norms
        self.degree = degree


class InfeasibleError(EntCurvesError):
    """No parameter on the search ladder satisfied every stage condition."""

    def __init__(self, message: str, trajectory: list[dict] | None = None):
        super().__init__(message)
        self.trajectory = trajectory or []
