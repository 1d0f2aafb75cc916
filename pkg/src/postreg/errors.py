"""Exception hierarchy shared by all postreg modules."""


class PostregError(Exception):
    """Base class for every error raised by postreg."""


class ValidationError(PostregError, ValueError):
    """Invalid input shape, dimension or parameter.

    ``field`` names the offending argument when one can be singled out.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ConfigError(ValidationError):
    """A plant, regulator or run configuration violates its invariants."""


class FactorizationError(PostregError, ArithmeticError):
    """A factorization hit a vanishing leading principal minor."""

    def __init__(self, message, minor_index=None):
        super().__init__(message)
        self.minor_index = minor_index


class SynthesisError(PostregError):
    """Gain synthesis produced an unusable gain (e.g. singular K'_eta)."""


class SingularityError(PostregError, ArithmeticError):
    """A linear system that must be uniquely solvable is (nearly) singular."""

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class BlowUpError(PostregError, FloatingPointError):
    """Closed-loop evaluation produced non-finite or out-of-range values."""

    def __init__(self, message, state=None, t=None):
        super().__init__(message)
        self.state = state
        self.t = t
