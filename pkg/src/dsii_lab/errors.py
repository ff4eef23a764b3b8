"""Exception hierarchy. Every error carries a stable ``kind`` used by the CLI."""


class DSIIError(Exception):
    kind = "error"
    exit_code = 2


class ConstraintViolation(DSIIError):
    kind = "constraint_violation"
    exit_code = 1


class NoSaddle(DSIIError):
    kind = "no_saddle"
    exit_code = 1


class ZeroMean(DSIIError):
    kind = "zero_mean"


class BranchUndefined(DSIIError):
    kind = "branch_undefined"
    exit_code = 1


class DegenerateDenominator(DSIIError):
    kind = "degenerate_denominator"


class QuadratureNotConverged(DSIIError):
    kind = "quadrature_not_converged"


class SingularDenominator(DSIIError):
    kind = "singular_denominator"


class BlowUp(DSIIError):
    kind = "blow_up"

    def __init__(self, msg, t=None, ratio=None):
        super().__init__(msg)
        self.t = t
        self.ratio = ratio


class NonlinearContamination(DSIIError):
    kind = "nonlinear_contamination"


class SingularSystem(DSIIError):
    kind = "singular_system"

    def __init__(self, msg, null_dim=None, cond=None):
        super().__init__(msg)
        self.null_dim = null_dim
        self.cond = cond


class MissingEntry(DSIIError):
    kind = "missing_entry"
