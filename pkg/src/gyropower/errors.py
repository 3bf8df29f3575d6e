"""Exception hierarchy.

Every error carries a stable string ``code`` and the process ``exit_code``
the command-line front-end maps it to (2 config, 3 numerical, 4
non-convergence).
"""


class GyroError(Exception):
    code = "ERROR"
    exit_code = 3


class ConfigError(GyroError):
    code = "CONFIG_ERROR"
    exit_code = 2

    def __init__(self, message, problems=None):
        super().__init__(message)
        # list of (field path, message) pairs
        self.problems = list(problems or [])


class SchemaError(ConfigError):
    code = "SCHEMA_ERROR"


class RangeError(ConfigError):
    code = "RANGE_ERROR"


class NumericalError(GyroError):
    code = "NUMERICAL_ERROR"
    exit_code = 3


class DimensionMismatch(NumericalError, ValueError):
    code = "DIMENSION_MISMATCH"


class NotPositiveDefinite(NumericalError, ValueError):
    code = "NOT_POSITIVE_DEFINITE"


class NotStable(NumericalError, ValueError):
    code = "NOT_STABLE"


class InconsistentSteadyState(NumericalError):
    code = "INCONSISTENT_STEADY_STATE"


class UnstableIntegration(NumericalError):
    code = "UNSTABLE_INTEGRATION"


class StepTooLarge(NumericalError):
    code = "STEP_TOO_LARGE"


class NotSkewRealizable(NumericalError):
    code = "NOT_SKEW_REALIZABLE"


class DomainTooSmall(NumericalError):
    code = "DOMAIN_TOO_SMALL"


class SolverSingular(NumericalError):
    code = "SOLVER_SINGULAR"


class NoConvergence(GyroError):
    code = "NO_CONVERGENCE"
    exit_code = 4

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
