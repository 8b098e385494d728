"""
Exception hierarchy shared by the services and the CLI.
"""
from typing import Optional


class RBMError(Exception):
    """Base class for every error raised by this package"""


class ConfigurationError(RBMError, ValueError):
    """Invalid or malformed experiment configuration"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GeometryError(RBMError, ValueError):
    """Disk/inclusion geometry violates its invariants"""


class MeshParseError(RBMError, ValueError):
    """Malformed mesh file"""

    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


class WavelengthDomainError(RBMError, ValueError):
    """Wavelength outside the parameter space"""


class AssemblyError(RBMError, RuntimeError):
    """Finite element assembly failed (e.g. a degenerate element)"""


class SolverError(RBMError, RuntimeError):
    """Truth solve failed or did not meet its residual bound"""


class DuplicateSnapshotError(RBMError, ValueError):
    """Wavelength is already part of the sample set"""


class SnapshotDependenceError(RBMError, RuntimeError):
    """New snapshot is numerically contained in the current reduced space"""


class ConditioningError(RBMError, RuntimeError):
    """Projected system is singular to working precision"""

    def __init__(self, message: str, condition: float):
        self.condition = condition
        super().__init__(f"{message} (condition estimate {condition:.3e})")


class IndicatorError(RBMError, RuntimeError):
    """Error indicator is undefined at the requested wavelength"""
