"""Exception hierarchy shared by all modules."""


class TwoGridError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(TwoGridError, ValueError):
    """Invalid user input (configuration, material, boundary conditions)."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class ParseError(TwoGridError, ValueError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SizeMismatch(TwoGridError, ValueError):
    pass


class EmptyMesh(TwoGridError, ValueError):
    pass


class DanglingFace(TwoGridError, ValueError):
    pass


class DegenerateTet(TwoGridError, ValueError):
    pass


class DegenerateElement(DegenerateTet):
    pass


class DegenerateFace(TwoGridError, ValueError):
    pass


class ProbeOutsideMesh(TwoGridError, ValueError):
    pass


class BracketFailure(TwoGridError, RuntimeError):
    pass


class NumericalFailure(TwoGridError, RuntimeError):
    """Base for failures of the numerical machinery (CLI exit code 2)."""


class NonPositiveDt(NumericalFailure, ValueError):
    pass


class SingularSystem(NumericalFailure):
    pass


class SolverDiverged(NumericalFailure):
    pass


class InsufficientConstraints(NumericalFailure):
    pass


class NotConverged(NumericalFailure):
    """Fixed-stress iteration did not reach the tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class IoError(TwoGridError, OSError):
    """Reading or writing a file failed."""
