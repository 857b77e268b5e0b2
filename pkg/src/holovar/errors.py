"""Exception types shared across the package."""


class HolovarError(Exception):
    pass


class InvalidInputError(HolovarError):
    """Malformed or inconsistent user input (grids, weights, domains)."""


class UnsupportedSettingError(HolovarError):
    """Operation requires a setting the inputs do not declare.

    Raised e.g. by transpositional pairings on time-dependent domains.
    """


class BasisConstructionError(HolovarError):
    """Produced probe basis is degenerate (Gram matrix rank-deficient)."""


class SingularHessianError(HolovarError):
    """Fiber Hessian of the Lagrangian is singular or too ill-conditioned."""

    def __init__(self, message, cond=None, where=None):
        super().__init__(message)
        self.cond = cond
        self.where = where


class FlowEscapeError(HolovarError):
    """A flowed atom left the domain; carries the offending atom index."""

    def __init__(self, message, atom_index=None, time=None):
        super().__init__(message)
        self.atom_index = atom_index
        self.time = time


class LPInfeasibleError(HolovarError):
    """Linear program has no feasible point; carries solver diagnostics."""

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details


class LPInternalError(HolovarError):
    """Solver reported a state that should be impossible for this LP class."""
