"""Exception types raised across the package."""

import numpy as np


class SggmDarError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(SggmDarError, np.linalg.LinAlgError):
    pass


class NonFiniteTarget(SggmDarError, ValueError):
    pass


class MalformedSticks(SggmDarError, ValueError):
    pass


class HistoryLengthMismatch(SggmDarError, ValueError):
    pass


class DimensionMismatch(SggmDarError, ValueError):
    pass


class LengthMismatch(DimensionMismatch):
    pass


class EmptyChain(SggmDarError, ValueError):
    pass


class NoMatchingSnapshots(SggmDarError, ValueError):
    """No recorded snapshot has the requested (M, P) pair.

    The posterior mass tables are attached so callers can report them.
    """

    def __init__(self, message, m_mass=None, p_mass=None):
        super().__init__(message)
        self.m_mass = m_mass
        self.p_mass = p_mass


class TraceTooShort(SggmDarError, ValueError):
    pass


class DegenerateRow(SggmDarError, ValueError):
    pass


class ConfigError(SggmDarError, ValueError):
    """Invalid configuration; ``field`` holds the dotted path of the offending key."""

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class SamplerAbort(SggmDarError, RuntimeError):
    def __init__(self, iteration, cause):
        super().__init__(f"sampler aborted at iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause


class DataError(SggmDarError, ValueError):
    """Malformed input file; ``row`` and ``column`` are 1-based when known."""

    def __init__(self, message, path=None, row=None, column=None):
        where = ", ".join(f"{k} {v}" for k, v in (("row", row), ("column", column)) if v is not None)
        prefix = f"{path}: " if path else ""
        super().__init__(f"{prefix}{message}" + (f" ({where})" if where else ""))
        self.path = path
        self.row = row
        self.column = column
