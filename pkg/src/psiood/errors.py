"""Exception hierarchy.

Every user-facing failure derives from :class:`PsiOodError` so the command
line frontend can turn it into a one-line diagnostic and exit code 1.
"""

from __future__ import annotations


class PsiOodError(ValueError):
    """Base class for domain errors."""


class InsufficientSamplesError(PsiOodError):
    pass


class NonFiniteError(PsiOodError):
    pass


class NonDiscriminativeClassError(PsiOodError):
    def __init__(self, class_name: str, mu_correct: float, mu_wrong: float):
        self.class_name = class_name
        self.mu_correct = mu_correct
        self.mu_wrong = mu_wrong
        super().__init__(
            f"class {class_name!r} is not discriminative: correct-class mean "
            f"{mu_correct!r} <= wrong-class mean {mu_wrong!r}"
        )


class DimensionMismatchError(PsiOodError):
    pass


class UncalibratedModelError(PsiOodError):
    def __init__(self, msg: str = "model has no psi_threshold; run calibration first"):
        super().__init__(msg)


class CalibrationUndefinedError(PsiOodError):
    """No misclassified validation samples, so coverage is undefined."""

    def __init__(self, msg: str = "calibration undefined: no misclassified validation samples"):
        super().__init__(msg)


class NoThresholdAchievesCoverageError(PsiOodError):
    def __init__(self, target: float, best_coverage: float, best_threshold: float):
        self.target = target
        self.best_coverage = best_coverage
        self.best_threshold = best_threshold
        super().__init__(
            f"no grid threshold reaches coverage {target!r}; best coverage "
            f"{best_coverage!r} at threshold {best_threshold!r}"
        )


class EmptySplitError(PsiOodError):
    pass


class IdMismatchError(PsiOodError):
    pass


class InvalidSpecError(PsiOodError):
    pass


class FormatError(PsiOodError):
    """Malformed input file. Carries the location when known."""

    def __init__(self, msg: str, path=None, line: int | None = None, column: int | None = None):
        self.path = path
        self.line = line
        self.column = column
        loc = []
        if path is not None:
            loc.append(str(path))
        if line is not None:
            loc.append(f"line {line}")
        if column is not None:
            loc.append(f"column {column}")
        prefix = ", ".join(loc)
        super().__init__(f"{prefix}: {msg}" if prefix else msg)


class HeaderMismatchError(FormatError):
    pass


class NonNumericLogitError(FormatError):
    pass


class DuplicateIdError(FormatError):
    pass


class UnknownLabelError(FormatError):
    pass


class SchemaViolationError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class UnwritablePathError(PsiOodError):
    pass
