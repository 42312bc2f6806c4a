"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 2 for bad input,
3 for certificate failures, 4 for minorization failures, 5 for numerical
trouble.
"""


class McmcLabError(Exception):
    exit_code = 2


# -- input / precondition errors (exit 2) ---------------------------------

class ValidationError(McmcLabError, ValueError):
    exit_code = 2


class NegativeEntry(ValidationError):
    def __init__(self, x, y, value):
        super().__init__(f"negative entry p[{x},{y}] = {value!r}")
        self.x, self.y, self.value = x, y, value


class RowSumOutOfTolerance(ValidationError):
    def __init__(self, x, total):
        super().__init__(f"row {x} sums to {total!r}")
        self.x, self.total = x, total


class DimensionMismatch(ValidationError):
    pass


class NotIrreducible(ValidationError):
    pass


class NotReversible(ValidationError):
    pass


class ZeroPiEntry(ValidationError):
    pass


class NotAbsorbing(ValidationError):
    def __init__(self, state):
        super().__init__(f"state {state} is not absorbing")
        self.state = state


class EmptyTargetSet(ValidationError):
    pass


class EmptySet(ValidationError):
    pass


class ParameterOutOfRange(ValidationError):
    pass


class NotContracting(ValidationError):
    pass


class EmptyCorpus(ValidationError):
    pass


class TailMassTooLarge(ValidationError):
    def __init__(self, row, defect):
        super().__init__(f"row {row} loses mass {defect:.3e} outside the grid")
        self.row, self.defect = row, defect


# -- certificate errors (exit 3) -------------------------------------------

class CertificateInvalid(McmcLabError):
    exit_code = 3


class NoValidDrift(CertificateInvalid):
    pass


# -- minorization errors (exit 4) ------------------------------------------

class MinorizationError(McmcLabError):
    exit_code = 4


class EmptyK(MinorizationError):
    pass


class AlphaZero(MinorizationError):
    pass


# -- numerical errors (exit 5) ---------------------------------------------

class NumericalError(McmcLabError, ArithmeticError):
    exit_code = 5


class SingularSystem(NumericalError):
    pass


class EigensolverFailure(NumericalError):
    pass


class NonDiagonalizable(NumericalError):
    pass


class SeriesDiverges(NumericalError):
    pass
