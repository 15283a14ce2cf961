"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, DataError exits 2,
NumericsError exits 3.
"""


class NbrsError(Exception):
    pass


class DataError(NbrsError):
    """Bad or missing input data (files, records, configuration values)."""


class NumericsError(NbrsError):
    """A numeric contract was violated: shape mismatch, non-finite values."""
