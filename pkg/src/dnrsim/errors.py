"""Exception hierarchy. Each class carries the CLI exit code used for it."""


class DnrError(Exception):
    exit_code = 1


class ScenarioError(DnrError):
    """Scenario file could not be parsed or failed semantic validation."""

    exit_code = 2

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class StructuralError(DnrError):
    """Feeder topology or device placement is inconsistent."""

    exit_code = 3


class SingularNetworkError(DnrError):
    exit_code = 4


class PowerFlowError(DnrError):
    """Newton-Raphson did not converge."""

    exit_code = 5

    def __init__(self, message, mismatch=None, iterations=None):
        self.mismatch = mismatch
        self.iterations = iterations
        super().__init__(message)


class UnsolvableIslandError(PowerFlowError):
    exit_code = 6


class DegenerateVoltageError(DnrError):
    exit_code = 7


class LinearizationAnchorError(DnrError):
    """The supplied operating point is not an equilibrium of the device model."""

    exit_code = 8


class OracleDivergenceError(DnrError):
    exit_code = 9
