"""Exception types raised by the diagnostics library.

Every error carries a short machine-readable ``code`` so that the pipeline can
record stage failures in reports without string matching.
"""

from __future__ import annotations


class DiagnosticError(Exception):
    code = "diagnostic_error"


class InvalidDimension(DiagnosticError, ValueError):
    code = "invalid_dimension"


class SingularSolve(DiagnosticError, ArithmeticError):
    code = "singular_solve"


class AtSpectrum(DiagnosticError, ArithmeticError):
    code = "at_spectrum"


class UnsupportedKind(DiagnosticError, NotImplementedError):
    code = "unsupported_kind"


class ZeroOnContour(DiagnosticError):
    code = "zero_on_contour"


class RealZeroFound(DiagnosticError):
    code = "real_zero_found"


class MultipleZero(DiagnosticError):
    code = "multiple_zero"


class OverflowGuard(DiagnosticError, OverflowError):
    code = "overflow_guard"


class InsufficientSpectrum(DiagnosticError):
    code = "insufficient_spectrum"


class EmptySpectrum(DiagnosticError):
    code = "empty_spectrum"


class SpectrumTouchesLine(DiagnosticError):
    code = "spectrum_touches_line"


class NonpositiveWeight(DiagnosticError, ValueError):
    code = "nonpositive_weight"


class MixedHalfPlanes(DiagnosticError, ValueError):
    code = "mixed_half_planes"


class PointOnAxis(DiagnosticError, ValueError):
    code = "point_on_axis"


class DegenerateGram(DiagnosticError):
    code = "degenerate_gram"


class DerivativeTooSmall(DiagnosticError):
    code = "derivative_too_small"


class ProbeAtSpectrum(DiagnosticError):
    code = "probe_at_spectrum"


class ParseError(DiagnosticError, ValueError):
    code = "parse_error"

    def __init__(self, message, line=None, column=None, field=None):
        self.line, self.column, self.field = line, column, field
        where = []
        if line is not None:
            where.append(f"line {line}, column {column}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{message} ({'; '.join(where)})" if where else message)


class ValidationError(DiagnosticError, ValueError):
    code = "validation_error"

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ModelBuildError(DiagnosticError):
    code = "model_build"


class EmitError(DiagnosticError, OSError):
    code = "io_error"
