"""Domain-specific exceptions shared across the package."""


class DegenerateFamilyError(ValueError):
    """The unperturbed family is degenerate (every orbit periodic), so the
    requested statistic is undefined."""


class TrialInvalidError(RuntimeError):
    """A Monte Carlo trial could not be evaluated and must be excluded."""


class DegenerateTangencyError(RuntimeError):
    """The tangency functional is identically below the resolution floor."""


class DegenerateSeriesError(ValueError):
    """All series coefficients vanish; there is nothing to count."""


class TruncationError(RuntimeError):
    """A truncated expansion was evaluated outside its certified radius."""


class NumericalFailureError(RuntimeError):
    """A quantity that must be positive came out negative beyond round-off,
    indicating an under-resolved quadrature."""


class ConfigError(ValueError):
    """An experiment configuration failed validation."""


class RunError(RuntimeError):
    """An experiment run failed (for example, too many excluded trials)."""
