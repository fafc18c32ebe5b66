"""Exception hierarchy shared by every vr3dense module."""
from typing import Optional


class Vr3denseError(Exception):
    """Base class. `code` is the short token the CLI prints after `vr3dense-error:`."""

    code: str = "error"


class ParameterError(Vr3denseError):
    code = "parameter"


class FormatError(Vr3denseError):
    """Malformed bytes or text in one of the KITTI/PNM/dump formats."""

    code = "format"

    def __init__(
        self,
        message: str,
        offset: Optional[int] = None,
        field: Optional[int] = None,
        key: Optional[str] = None,
    ):
        super().__init__(message)
        self.offset = offset
        self.field = field
        self.key = key


class CalibrationError(Vr3denseError):
    code = "calibration"


class OracleError(Vr3denseError):
    """Finite-difference probe hit a non-finite function value."""

    code = "oracle"

    def __init__(self, message: str, coordinate: int):
        super().__init__(message)
        self.coordinate = coordinate


class OptimizationError(Vr3denseError):
    code = "optimization"

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class EvaluationError(Vr3denseError):
    code = "evaluation"


class ConfigError(Vr3denseError):
    code = "config"
