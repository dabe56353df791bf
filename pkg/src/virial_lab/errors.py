"""Exception hierarchy shared by all modules.

The CLI maps each family to a distinct exit code (see ``EXIT_CODES``).
"""


class VirialLabError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(VirialLabError, ValueError):
    """Invalid experiment configuration."""


class DomainError(VirialLabError, ValueError):
    """Argument or state outside the domain of a function or system."""


class PoleError(DomainError):
    """Evaluation at (or numerically at) a pole of a kappa-tangent."""


class SingularGeneratorError(DomainError):
    """A virial generator vanishes inside an integration interval."""


class EscapeError(DomainError):
    """Unbounded motion: the position norm exceeded the configured bound."""


class MethodMismatch(VirialLabError, TypeError):
    """Integrator not applicable to the system (e.g. Verlet with a PDM)."""


class DegenerateDegree(VirialLabError, ValueError):
    """Homogeneity degree for which the requested identity is undefined."""


class ConvergenceError(VirialLabError, RuntimeError):
    """An iterative solver failed to converge."""


class QuadratureError(ConvergenceError):
    """Adaptive quadrature did not reach the requested tolerance."""


class LinearSolveError(ConvergenceError):
    """Factorisation or solve of a linear system failed."""


class AsymmetryError(VirialLabError, ValueError):
    """Expectation value of a supposedly symmetric operator is not real."""


EXIT_CODES = (
    (ConfigError, 2),
    (ConvergenceError, 3),
    (DomainError, 4),
)


def exit_code_for(exc: BaseException) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return 1
