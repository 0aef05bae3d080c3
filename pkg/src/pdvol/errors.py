"""Exception hierarchy.

Input problems (bad parameters, malformed files, infeasible configuration)
derive from :class:`InputError`; failures of a numerical procedure on valid
input derive from :class:`NumericalError`.  The CLI maps the two families to
exit codes 2 and 1 respectively.
"""


class PdvError(Exception):
    """Base class for every error raised by the package."""


class InputError(PdvError, ValueError):
    pass


class DomainError(InputError):
    """Argument outside the domain of a coefficient function."""


class ValidationError(InputError):
    """Data or configuration violates a declared invariant."""


class ParseError(ValidationError):
    pass


class DegenerateError(InputError):
    """Problem is ill-posed for the data given (e.g. constant regressor)."""


class ConfigError(InputError):
    pass


class NumericalError(PdvError, RuntimeError):
    pass


class AllPathsDiscarded(NumericalError):
    pass


class NoFeasibleControl(NumericalError):
    pass


class AdmissibilityError(NumericalError):
    """Control violates the positivity floor of the controlled flow."""


class InstabilityError(NumericalError):
    pass


class QuadratureError(NumericalError):
    pass


class DivergenceError(NumericalError):
    """A defining integral diverges on the requested branch."""


class EvidenceContradiction(NumericalError):
    """Numerical probes contradict the closed-form classification."""
