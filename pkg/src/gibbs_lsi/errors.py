"""Exception hierarchy shared by all modules.

The CLI maps :class:`DivergenceError`, :class:`InsufficientDecay` and
:class:`ConvergenceDiagnosticError` (a verdict that cannot be reached) to exit
code 1 and every other error of this package to exit code 2.
"""


class GibbsLSIError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(GibbsLSIError, ValueError):
    """Invalid or missing configuration."""


class ModelRejected(ConfigError):
    """The model cannot define a probability measure (non-integrable)."""


class FeasibilityError(GibbsLSIError):
    """The requested computation does not fit the chosen engine."""


class EvaluationError(GibbsLSIError, FloatingPointError):
    """A non-finite value was produced where a finite one is required."""


class DegenerateInput(GibbsLSIError, ValueError):
    """Input for which the requested functional is undefined."""


class MissingGradient(GibbsLSIError, KeyError):
    """A gradient was requested for a site the function does not provide."""


class OutOfRange(GibbsLSIError, ValueError):
    """A parameter lies outside the range where the estimate is meaningful."""


class DivergenceError(GibbsLSIError, ArithmeticError):
    """A geometric series required for assembly does not converge."""


class InsufficientDecay(GibbsLSIError):
    """Too few residuals above the numerical floor to fit a rate."""


class ConvergenceDiagnosticError(GibbsLSIError):
    """Markov chains failed their equilibration diagnostics."""
