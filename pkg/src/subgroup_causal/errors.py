"""Exception hierarchy shared by the estimation modules and the CLI."""


class SubgroupCausalError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DataError(SubgroupCausalError, ValueError):
    """Malformed, inconsistent or insufficient input data."""

    exit_code = 2


class IdentificationError(SubgroupCausalError):
    """The observed margins cannot be mapped back to a model joint."""

    exit_code = 3


class RankDeficientError(IdentificationError):
    """The identifying linear system does not have a unique solution."""


class ModelIncompatibleError(IdentificationError):
    """The unique solution lies outside the parameter space (e.g. negative odds)."""


class ConvergenceError(SubgroupCausalError):
    """An iterative fit failed to converge or could not be started."""

    exit_code = 4
