"""
Error hierarchy for the speed-change lattice gas toolkit
Each class maps onto one CLI exit code
"""

from typing import Any, Dict, Optional


class SpeedChangeError(Exception):
    """Base class for all library errors"""

    exit_code = 1


class InputError(SpeedChangeError):
    """Malformed arguments, model files or local patterns"""

    exit_code = 1


class StructuralError(SpeedChangeError):
    """A structural condition (locality, divergence, coercivity) fails"""

    exit_code = 2

    def __init__(self, message: str, counterexample: Optional[Any] = None):
        super().__init__(message)
        self.counterexample = counterexample


class NumericalError(SpeedChangeError):
    """Solver, quadrature or integrator failure"""

    exit_code = 3

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics: Dict[str, Any] = diagnostics or {}


class ResourceError(SpeedChangeError):
    """Requested enumeration or allocation is infeasible"""

    exit_code = 3
