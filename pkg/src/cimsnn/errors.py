"""Exception hierarchy shared by every simulator stage."""


class CimSnnError(Exception):
    """Base class; the CLI maps subclasses onto exit codes via ``exit_code``."""

    exit_code = 1


class UnsupportedPrecision(CimSnnError, ValueError):
    exit_code = 3


class ValidationError(CimSnnError, ValueError):
    exit_code = 3


class ParseError(CimSnnError, ValueError):
    exit_code = 3

    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field


class ShapeMismatch(CimSnnError, ValueError):
    exit_code = 3


class FanInExceedsCapacity(CimSnnError, ValueError):
    exit_code = 4

    def __init__(self, message, layer_index=None):
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)
        self.layer_index = layer_index


class TileOverflow(CimSnnError, ValueError):
    exit_code = 3


class ParityMismatch(CimSnnError, RuntimeError):
    exit_code = 1


class CalibrationDiverged(CimSnnError, RuntimeError):
    exit_code = 6


class MalformedEvent(CimSnnError, ValueError):
    exit_code = 7

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class OutOfBounds(MalformedEvent):
    exit_code = 7
