"""Threshold selection from validation misclassifications, and threshold sweeps.

No OOD examples are used: a threshold is the smallest grid value under which
at least a fraction ``q`` of the misclassified validation samples would have
been flagged OOD.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, DetectorModel, ps_matrix
from .detectors import BaselineKind, energy_score, interpret_batch, softmax
from .errors import (
    CalibrationUndefinedError,
    DimensionMismatchError,
    EmptySplitError,
    InvalidSpecError,
    NoThresholdAchievesCoverageError,
    PsiOodError,
)
from .evaluation import EvalReport, tally


def neglog_grid(start: float = 0.1, stop: float = 13.0, step: float = 0.1) -> np.ndarray:
    """Thresholds ``1 - 10**-x`` for ``x`` from ``start`` to ``stop`` inclusive."""
    if step <= 0 or stop < start:
        raise InvalidSpecError("grid needs step > 0 and stop >= start")
    n = int(round((stop - start) / step))
    x = np.round(start + step * np.arange(n + 1), 10)
    return 1.0 - 10.0 ** (-x)


def linear_grid(start: float, stop: float, step: float) -> np.ndarray:
    if step <= 0 or stop < start:
        raise InvalidSpecError("grid needs step > 0 and stop >= start")
    n = int(round((stop - start) / step))
    return np.round(start + step * np.arange(n + 1), 12)


def default_grid() -> np.ndarray:
    return neglog_grid(0.1, 13.0, 0.1)


def parse_grid(text: str) -> np.ndarray:
    """Parse ``neglog:A:B:S``, ``linear:A:B:S`` or a comma-separated list."""
    text = text.strip()
    try:
        if text.startswith(("neglog:", "linear:")):
            kind, *args = text.split(":")
            if len(args) != 3:
                raise ValueError
            a, b, s = (float(v) for v in args)
            return neglog_grid(a, b, s) if kind == "neglog" else linear_grid(a, b, s)
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise InvalidSpecError(f"cannot parse grid {text!r}") from None


@dataclass(frozen=True, eq=False)
class CalibrationSpec:
    coverage_target: float = 0.75
    grid: np.ndarray | None = None  # None: detector default

    def __post_init__(self):
        q = self.coverage_target
        if not (0.0 < q <= 1.0):
            raise InvalidSpecError(f"coverage target must lie in (0, 1], got {q!r}")
        if self.grid is not None:
            g = np.asarray(self.grid, dtype=np.float64).reshape(-1)
            if g.size == 0 or not np.all(np.isfinite(g)):
                raise InvalidSpecError("grid must be a non-empty list of finite values")
            if np.any(np.diff(g) <= 0):
                raise InvalidSpecError("grid must be strictly increasing")
            object.__setattr__(self, "grid", g)

    def unit_grid(self) -> np.ndarray:
        g = default_grid() if self.grid is None else self.grid
        if np.any(g <= 0) or np.any(g >= 1):
            raise InvalidSpecError("interpreter and max-softmax thresholds must lie in (0, 1)")
        return g


@dataclass(frozen=True)
class CalibrationResult:
    chosen_threshold: float
    achieved_coverage: float
    misclassified_count: int
    flagged_count: int
    coverage_target: float = 0.75
    detector: str = "psi"


def _misclassified_mask(validation: Dataset) -> np.ndarray:
    if np.any(validation.labels < 0):
        raise PsiOodError("validation labels must all be class indices (found OOD or unknown markers)")
    return np.argmax(validation.logits, axis=1) != validation.labels


def misclassified_subset(model: DetectorModel | None, validation: Dataset) -> list:
    """Validation samples whose argmax-logit class differs from the label."""
    if model is not None and validation.n_classes != model.n_classes:
        raise DimensionMismatchError("validation width does not match the model")
    mask = _misclassified_mask(validation)
    return [validation[i] for i in np.flatnonzero(mask)]


def _select(flagged: np.ndarray, m: int, grid: np.ndarray, q: float, detector: str) -> CalibrationResult:
    # full scan: interpreter coverage is not monotone in t
    coverage = flagged / m
    ok = np.flatnonzero(coverage >= q)
    if ok.size == 0:
        best = int(np.argmax(coverage))
        raise NoThresholdAchievesCoverageError(q, float(coverage[best]), float(grid[best]))
    i = int(ok[0])
    return CalibrationResult(float(grid[i]), float(coverage[i]), m, int(flagged[i]), q, detector)


def calibrate_psi_scores(ps: np.ndarray, spec: CalibrationSpec) -> CalibrationResult:
    """Calibrate on precomputed score vectors of misclassified samples."""
    ps = np.asarray(ps, dtype=np.float64)
    m = len(ps)
    if m == 0:
        raise CalibrationUndefinedError()
    if ps.ndim != 2:
        raise DimensionMismatchError("score vectors must form a 2-d array")
    grid = spec.unit_grid()
    # Red unless exactly one score reaches t, i.e. unless top2 < t <= top1
    s = np.sort(ps, axis=1)
    top1 = np.sort(s[:, -1])
    top2 = np.sort(s[:, -2]) if s.shape[1] > 1 else np.full(m, -np.inf)
    kept = np.searchsorted(top2, grid, side="left") - np.searchsorted(top1, grid, side="left")
    return _select(m - kept, m, grid, spec.coverage_target, "psi")


def calibrate_psi(model: DetectorModel, validation: Dataset, spec: CalibrationSpec | None = None):
    """Pick the interpreter threshold; returns ``(result, calibrated_model)``."""
    spec = spec or CalibrationSpec()
    if validation.n_classes != model.n_classes:
        raise DimensionMismatchError("validation width does not match the model")
    mask = _misclassified_mask(validation)
    result = calibrate_psi_scores(ps_matrix(model, validation.logits[mask]), spec)
    return result, model.with_threshold(result.chosen_threshold)


def baseline_scores(kind, logits) -> np.ndarray:
    """Per-sample confidence: max softmax probability or logsumexp."""
    kind = BaselineKind(kind)
    x = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    if kind is BaselineKind.MAX_SOFTMAX:
        return softmax(x).max(axis=1)
    return np.atleast_1d(energy_score(x))


def energy_default_grid(scores) -> np.ndarray:
    # one ulp above each distinct score, so "score < tau" can flag it
    return np.nextafter(np.unique(np.asarray(scores, dtype=np.float64)), np.inf)


def required_count(q: float, m: int) -> int:
    """Smallest k with ``k / m >= q`` (same float comparison as the scan)."""
    k = min(max(int(np.ceil(q * m)), 1), m)
    while k > 1 and (k - 1) / m >= q:
        k -= 1
    while k < m and k / m < q:
        k += 1
    return k


def order_statistic_threshold(scores, q: float, grid) -> float | None:
    """Smallest grid value strictly above the k-th smallest score, k = ceil(q m)."""
    s = np.sort(np.asarray(scores, dtype=np.float64))
    if s.size == 0:
        raise CalibrationUndefinedError()
    kth = s[required_count(q, s.size) - 1]
    above = np.asarray(grid)[np.asarray(grid) > kth]
    return float(above[0]) if above.size else None


def calibrate_baseline(kind, misclassified_logits, spec: CalibrationSpec | None = None) -> CalibrationResult:
    """Threshold for the max-softmax or energy baseline.

    Both flag a sample when its score is below the threshold, so coverage is
    monotone and the answer equals :func:`order_statistic_threshold`.
    """
    spec = spec or CalibrationSpec()
    kind = BaselineKind(kind)
    x = np.asarray(misclassified_logits, dtype=np.float64)
    if x.size == 0:
        raise CalibrationUndefinedError()
    scores = baseline_scores(kind, x)
    if kind is BaselineKind.MAX_SOFTMAX:
        grid = spec.unit_grid()
        name = "msp"
    else:
        grid = energy_default_grid(scores) if spec.grid is None else spec.grid
        name = "energy"
    flagged = np.searchsorted(np.sort(scores), grid, side="left")
    return _select(flagged, len(scores), grid, spec.coverage_target, name)


def calibrate_baseline_on(kind, validation: Dataset, spec: CalibrationSpec | None = None) -> CalibrationResult:
    mask = _misclassified_mask(validation)
    return calibrate_baseline(kind, validation.logits[mask], spec)


@dataclass(frozen=True, eq=False)
class SweepRow:
    threshold: float
    report: EvalReport = field(repr=False)

    @property
    def classification_accuracy(self) -> float:
        return self.report.classification_accuracy

    @property
    def ood_detection_rate(self) -> float:
        return self.report.ood_detection_rate

    @property
    def weighted_accuracy(self) -> float:
        return self.report.weighted_accuracy


def _check_sweep_inputs(test: Dataset, ood: Dataset):
    if len(test) == 0 or len(ood) == 0:
        raise EmptySplitError("threshold sweep needs non-empty test and OOD splits")
    if np.any(test.labels < 0):
        raise PsiOodError("test labels must be class indices")
    if np.any(ood.labels != -1):
        raise PsiOodError("OOD split labels must all be OOD markers")
    if test.n_classes != ood.n_classes:
        raise DimensionMismatchError("test and OOD splits differ in width")


def threshold_sweep(model: DetectorModel, test: Dataset, ood: Dataset, grid=None) -> list:
    """Evaluate the interpreter at every grid threshold."""
    _check_sweep_inputs(test, ood)
    grid = default_grid() if grid is None else np.asarray(grid, dtype=np.float64).reshape(-1)
    if grid.size == 0:
        raise EmptySplitError("empty threshold grid")
    ps = ps_matrix(model, np.vstack([test.logits, ood.logits]))
    truth = np.concatenate([test.labels, ood.labels])
    rows = []
    for t in grid:
        _, pred = interpret_batch(ps, float(t))
        rows.append(SweepRow(float(t), tally(model.class_names, truth, pred)))
    return rows


def baseline_sweep(kind, test: Dataset, ood: Dataset, grid) -> list:
    """Same table for a baseline detector (flag when score < threshold)."""
    _check_sweep_inputs(test, ood)
    grid = np.asarray(grid, dtype=np.float64).reshape(-1)
    if grid.size == 0:
        raise EmptySplitError("empty threshold grid")
    x = np.vstack([test.logits, ood.logits])
    scores = baseline_scores(kind, x)
    arg = np.argmax(x, axis=1)
    truth = np.concatenate([test.labels, ood.labels])
    return [
        SweepRow(float(t), tally(test.class_names, truth, np.where(scores < t, -1, arg)))
        for t in grid
    ]


SWEEP_METRICS = ("weighted_accuracy", "classification_accuracy", "ood_detection_rate")


def select_best(rows, metric: str = "weighted_accuracy") -> SweepRow:
    """Grid maximiser of ``metric``; ties go to the smaller threshold."""
    if metric not in SWEEP_METRICS:
        raise InvalidSpecError(f"unknown metric {metric!r}; choose from {', '.join(SWEEP_METRICS)}")
    if not rows:
        raise EmptySplitError("empty sweep")
    return max(rows, key=lambda r: (getattr(r, metric), -r.threshold))
