"""Exception types shared across the library.

Validation errors carry the offending index in their message so CLI
diagnostics can name the bad entry.
"""


class DualsmoothError(Exception):
    """Base class for all library-specific errors."""


class ModelValidationError(DualsmoothError, ValueError):
    """A model violates one of its structural invariants."""


class RowSumNonzero(ModelValidationError):
    def __init__(self, row: int, value: float):
        self.row = row
        self.value = value
        super().__init__(f"rate matrix row {row} sums to {value:.3e}, expected 0")


class NegativeRate(ModelValidationError):
    def __init__(self, i: int, j: int, value: float):
        self.i, self.j = i, j
        self.value = value
        super().__init__(f"rate A[{i}][{j}] = {value:.3e} is negative")


class BadPrior(ModelValidationError):
    def __init__(self, detail: str):
        super().__init__(f"invalid prior: {detail}")


class NonPositiveControl(DualsmoothError, ValueError):
    def __init__(self, detail: str = "control entries must be strictly positive"):
        super().__init__(detail)


class DegeneratePrior(DualsmoothError, ValueError):
    def __init__(self, detail: str = "prior reweighting underflowed to zero mass"):
        super().__init__(detail)


class NumericalBlowup(DualsmoothError, RuntimeError):
    """An integrated field exceeded the overflow guard (too-coarse step)."""

    def __init__(self, what: str, time_index: int):
        self.time_index = time_index
        super().__init__(f"{what} exceeded the overflow guard at time index {time_index}")


class CFLViolation(DualsmoothError, RuntimeError):
    """Explicit stepping went unstable; more substeps are needed."""

    def __init__(self, detail: str):
        super().__init__(detail)


class RiccatiBlowup(DualsmoothError, RuntimeError):
    def __init__(self, detail: str = "backward Riccati sweep diverged"):
        super().__init__(detail)


class LostPositivity(DualsmoothError, RuntimeError):
    def __init__(self, detail: str):
        super().__init__(detail)


class CovarianceNotPD(DualsmoothError, RuntimeError):
    def __init__(self, detail: str = "covariance lost positive definiteness"):
        super().__init__(detail)


class MalformedInput(DualsmoothError, ValueError):
    def __init__(self, detail: str):
        super().__init__(detail)


class GridTooCoarseWarning(UserWarning):
    """Cell Peclet number exceeds the advection-dominance guard."""


class PathEscapedDomainWarning(UserWarning):
    """A simulated diffusion path was reflected back into the domain."""
