"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value (bad generator, unknown key, schema violation)."""


class AnsatzViolationError(ValueError):
    """The quadratic value ansatz left its admissible region (A <= 0 or log-domain)."""


class DegenerateHorizonError(ValueError):
    """Lagrange-multiplier denominator vanished (happens at t0 = T)."""


class GradientError(RuntimeError):
    """A finite-difference probe produced a non-finite evaluation."""
