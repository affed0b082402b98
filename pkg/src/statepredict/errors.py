"""Exception hierarchy.

Every error carries a ``category`` used by the CLI to pick an exit code and
the ``error:<category>:`` prefix on stderr.
"""


class StatePredictError(Exception):
    category = "error"


class ValidationError(StatePredictError, ValueError):
    category = "validation"


class IoFailure(StatePredictError, OSError):
    category = "io"


# statechart
class DuplicateStateId(ValidationError):
    pass


class UnknownStateInTransition(ValidationError):
    pass


class AmbiguousTransition(ValidationError):
    pass


class MissingInitialChild(ValidationError):
    pass


# monitor
class MissingEnvironmentKey(ValidationError, KeyError):
    pass


# worldstore
class UnknownWorldStateId(ValidationError, KeyError):
    pass


class CorruptDatabase(ValidationError):
    pass


# predictor / resources
class EmptyStore(ValidationError):
    pass


class IndexOutOfRange(ValidationError, IndexError):
    pass


class DimensionMismatch(ValidationError):
    pass


class InvalidThreshold(ValidationError):
    pass
