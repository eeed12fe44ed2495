"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
2 for configuration / argument problems, 3 for data problems and 4 for
numerical failures.
"""


class FundiffError(Exception):
    exit_code = 1


class ConfigError(FundiffError):
    exit_code = 2


class InvalidArgumentError(ConfigError, ValueError):
    pass


class DataError(FundiffError):
    exit_code = 3


class DomainError(DataError, ValueError):
    pass


class BasisMismatchError(DataError, ValueError):
    pass


class InvalidBasisError(DataError, ValueError):
    pass


class ShapeError(DataError, ValueError):
    pass


class UnderdeterminedError(DataError):
    """Fewer observations than basis functions for a curve."""

    def __init__(self, n_obs, n_basis, location=None):
        self.n_obs = n_obs
        self.n_basis = n_basis
        self.cond = float("inf")
        self.location = location
        msg = f"{n_obs} observations < {n_basis} basis functions"
        if location is not None:
            msg += f" at (sample, node) = {location}"
        super().__init__(msg)


class NumericalError(FundiffError):
    exit_code = 4


class ConditioningError(NumericalError):
    def __init__(self, n_obs, n_basis, cond, location=None):
        self.n_obs = n_obs
        self.n_basis = n_basis
        self.cond = cond
        self.location = location
        msg = f"ill-conditioned design (T={n_obs}, L={n_basis}, cond(B'B)={cond:.3g})"
        if location is not None:
            msg += f" at (sample, node) = {location}"
        super().__init__(msg)


class DegenerateSpectrumError(NumericalError):
    pass


class FactorizationError(NumericalError):
    pass


class InvalidInputError(NumericalError, ValueError):
    """Input matrices violate a solver precondition (e.g. not PSD)."""


class UndefinedRateError(DataError, ValueError):
    """A true-positive rate requested against an empty truth set."""
