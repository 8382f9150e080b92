"""Exceptions shared by the numerical modules and the command line.

Every error carries a human readable ``detail`` and the process exit code the CLI
should use when the error escapes a subcommand.
"""


class VortexMFError(Exception):
    exit_code = 3

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ConfigurationError(VortexMFError):
    """Invalid mesh, solver or run configuration"""
    exit_code = 1


class DomainError(VortexMFError):
    """Parameters outside the domain where a formula or solve makes sense"""
    exit_code = 1


class EnergyBelowUniformError(DomainError):
    """Target energy below the energy of the uniform state"""
    exit_code = 2


class HypothesisViolationError(VortexMFError):
    """Inputs violate the hypotheses a diagnostic is built on"""
    exit_code = 1


class NonConvergenceError(VortexMFError):
    exit_code = 2


class BubbleDivergenceError(NonConvergenceError):
    """The entire radial solution does not have finite mass"""


class InternalError(VortexMFError):
    exit_code = 3
