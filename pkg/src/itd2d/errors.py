"""Exception hierarchy.

Input problems (bad config, missing columns, points outside the cell) derive
from :class:`InputError`; failures of a numerical procedure derive from
:class:`NumericalError`. The CLI maps the two families to exit codes 2 and 3.
"""


class ITDError(Exception):
    pass


class InputError(ITDError, ValueError):
    pass


class NumericalError(ITDError, RuntimeError):
    pass


class DomainError(InputError):
    """A requested point lies outside the closed (r, z) domain."""


class MissingColumnError(InputError):
    pass


class ConfigError(InputError):
    pass


class ModelError(NumericalError):
    """Assembly produced an operator that violates a structural invariant."""


class OracleDivergenceError(NumericalError):
    pass


class NoSteadyStateError(NumericalError):
    pass


class CalibrationError(NumericalError):
    pass


class FilterDivergenceError(NumericalError):
    pass


class IdentificationError(NumericalError):
    pass
