"""Exception and warning types raised by repdyn."""

import numpy as np


class RepdynError(Exception):
    """Base class for library errors."""


class RankDeficientError(RepdynError, ValueError):
    pass


class SingularSystemError(RepdynError, np.linalg.LinAlgError):
    """A linear system that must be invertible is (numerically) singular."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class NoRealInvariantSubspaceError(RepdynError, ValueError):
    """A complex-conjugate eigenvalue pair straddles the requested dimension."""

    def __init__(self, d, safe_below, safe_above):
        self.d = d
        self.safe_below = safe_below
        self.safe_above = safe_above
        super().__init__(
            f"no real top-{d} invariant subspace: a complex-conjugate pair "
            f"straddles position {d}; nearest safe dimensions are "
            f"{safe_below} and {safe_above}"
        )


class SinkhornError(RepdynError, RuntimeError):
    pass


class ConfigError(RepdynError, ValueError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class EigenvalueGapWarning(UserWarning):
    pass


class RankWarning(UserWarning):
    pass
