"""Exception hierarchy.

Validation problems (bad inputs, bad configuration) derive from
``ValidationError``; numerical failures during a computation derive from
``NumericalError``.  The CLI maps the two families to distinct exit codes.
"""


class ChemostatError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(ChemostatError, ValueError):
    """An input violates a documented precondition."""


class NumericalError(ChemostatError, ArithmeticError):
    """A computation could not be carried out numerically."""


class NoRoot(NumericalError):
    """The Lotka-Sharpe residual has no sign change in the searched bracket."""


class NonPositiveProfile(ValidationError):
    """An age profile that must be strictly positive is not."""


class NonPositiveInput(NonPositiveProfile):
    """Input to the logarithmic transform has a non-positive sample."""


class NonPositiveInterior(NonPositiveProfile):
    """Interior quadrature nodes must be strictly positive."""


class NonPositiveOutput(NumericalError):
    """The measured output is not strictly positive, so its log is undefined."""


class IncompatibleHistory(ValidationError):
    """The history's current value does not satisfy the delay equation."""


class SingularStep(NumericalError):
    """The implicit quadrature weight at lag zero makes the step singular."""


class NoContraction(NumericalError):
    """No lambda was found with contraction gap below one."""

    def __init__(self, message: str, min_gap: float):
        super().__init__(message)
        self.min_gap = min_gap


class GapNotContractive(NumericalError):
    """The supplied lambda does not give a gap below one."""


class BadDelta(ValidationError):
    """The kernel mass on [0, delta] is at least one."""


class Diverged(NumericalError):
    """A simulated state left the representable range."""


class GainConditionFailed(ValidationError):
    """Observer gains do not admit a valid quadratic form."""


class DecayViolated(NumericalError):
    """A Lyapunov decay inequality failed along a trajectory."""

    def __init__(self, message: str, step: int, margin: float):
        super().__init__(message)
        self.step = step
        self.margin = margin


class ConfigParseError(ValidationError):
    """A configuration file line could not be parsed."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ConfigValidationError(ValidationError):
    """A parsed configuration violates an invariant."""
