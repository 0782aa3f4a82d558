"""Weighted accuracy, OOD-augmented confusion matrices and distribution data."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal, localcontext
from fractions import Fraction
from numbers import Rational
from typing import Mapping, Sequence

import numpy as np

from .core import OOD, UNKNOWN, Dataset, DetectorModel, probability_scores
from .detectors import DetectorDecision
from .errors import DimensionMismatchError, EmptySplitError, IdMismatchError, PsiOodError

MIN_BINS = 10
MAX_BINS = 1000
PS_CURVE_POINTS = 256


def round3(value) -> Decimal:
    """Round half away from zero to three decimals.

    Floats are read through their shortest repr, so ``0.7455`` rounds to
    ``0.746``; fractions are converted exactly.
    """
    if isinstance(value, Decimal):
        d = value
    elif isinstance(value, Rational):
        with localcontext() as ctx:
            ctx.prec = 60
            d = Decimal(value.numerator) / Decimal(value.denominator)
    else:
        d = Decimal(repr(float(value)))
    return d.quantize(Decimal("0.001"), rounding=ROUND_HALF_UP)


def weighted_accuracy_exact(n_T: int, N_T: int, n_OOD: int, N_OOD: int) -> Fraction:
    if N_T <= 0 or N_OOD <= 0:
        raise EmptySplitError(
            f"weighted accuracy needs non-empty test and OOD splits (N_T={N_T}, N_OOD={N_OOD})"
        )
    if not (0 <= n_T <= N_T and 0 <= n_OOD <= N_OOD):
        raise PsiOodError("counts must satisfy 0 <= n <= N")
    return (Fraction(n_T, N_T) + Fraction(n_OOD, N_OOD)) / 2


def weighted_accuracy(n_T: int, N_T: int, n_OOD: int, N_OOD: int) -> float:
    """Mean of classification accuracy on ID samples and OOD detection rate."""
    return float(weighted_accuracy_exact(n_T, N_T, n_OOD, N_OOD))


@dataclass(frozen=True, eq=False)
class EvalReport:
    class_names: tuple
    n_T: int
    N_T: int
    n_OOD: int
    N_OOD: int
    confusion: np.ndarray  # (C+1, C+1); rows true, columns predicted; last index is OOD

    @property
    def classification_accuracy(self) -> float:
        return float(Fraction(self.n_T, self.N_T))

    @property
    def ood_detection_rate(self) -> float:
        return float(Fraction(self.n_OOD, self.N_OOD))

    @property
    def weighted_accuracy(self) -> float:
        return weighted_accuracy(self.n_T, self.N_T, self.n_OOD, self.N_OOD)

    def __eq__(self, other):
        if not isinstance(other, EvalReport):
            return NotImplemented
        return (
            self.class_names == other.class_names
            and (self.n_T, self.N_T, self.n_OOD, self.N_OOD) == (other.n_T, other.N_T, other.n_OOD, other.N_OOD)
            and np.array_equal(self.confusion, other.confusion)
        )


def tally(class_names: Sequence[str], true_labels, predicted) -> EvalReport:
    """Build a report from label arrays.

    ``true_labels`` holds class indices or :data:`OOD`; ``predicted`` holds
    class indices or -1 for samples flagged OOD.
    """
    C = len(class_names)
    y = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted, dtype=np.int64)
    if y.shape != p.shape:
        raise DimensionMismatchError("truth and predictions differ in length")
    if np.any(y == UNKNOWN):
        raise PsiOodError("evaluation truth cannot contain unknown labels")
    rows = np.where(y == OOD, C, y)
    cols = np.where(p < 0, C, p)
    confusion = np.zeros((C + 1, C + 1), dtype=np.int64)
    np.add.at(confusion, (rows, cols), 1)
    N_T = int(np.count_nonzero(rows < C))
    N_OOD = int(np.count_nonzero(rows == C))
    if N_T == 0 or N_OOD == 0:
        raise EmptySplitError(f"evaluation needs ID and OOD samples (N_T={N_T}, N_OOD={N_OOD})")
    n_T = int(np.trace(confusion[:C, :C]))
    n_OOD = int(confusion[C, C])
    return EvalReport(tuple(class_names), n_T, N_T, n_OOD, N_OOD, confusion)


def evaluate(decisions: Sequence[DetectorDecision], truth: Dataset) -> EvalReport:
    """Score detector decisions against ground truth.

    An ID sample counts as correct only if it is not flagged OOD and its
    predicted class matches. Decisions and truth must cover the same ids.
    """
    index = {sid: i for i, sid in enumerate(truth.ids)}
    seen = np.zeros(len(truth), dtype=bool)
    predicted = np.full(len(truth), -1, dtype=np.int64)
    for d in decisions:
        i = index.get(d.sample_id)
        if i is None:
            raise IdMismatchError(f"decision for unknown sample id {d.sample_id!r}")
        if seen[i]:
            raise IdMismatchError(f"duplicate decision for sample id {d.sample_id!r}")
        seen[i] = True
        if not d.is_ood:
            if not 0 <= d.predicted_class < truth.n_classes:
                raise PsiOodError(f"predicted class {d.predicted_class} out of range")
            predicted[i] = d.predicted_class
    if not seen.all():
        missing = truth.ids[int(np.flatnonzero(~seen)[0])]
        raise IdMismatchError(f"{int((~seen).sum())} samples have no decision (first: {missing!r})")
    return tally(truth.class_names, truth.labels, predicted)


@dataclass(frozen=True, eq=False)
class SplitHistogram:
    edges: np.ndarray
    correct: np.ndarray
    wrong: np.ndarray
    ood: np.ndarray | None = None
    unlabeled: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class ClassDistribution:
    class_index: int
    class_name: str
    ps_x: np.ndarray
    ps_y: np.ndarray
    splits: dict  # split name -> SplitHistogram


@dataclass(frozen=True, eq=False)
class DistributionReport:
    classes: tuple


def bin_edges(values) -> np.ndarray:
    """Freedman-Diaconis edges, at least 10 and at most 1000 bins."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return np.linspace(0.0, 1.0, MIN_BINS + 1)
    # count bins before asking numpy for edges; a far outlier would otherwise
    # make the "fd" rule allocate billions of them
    q75, q25 = np.percentile(v, [75, 25])
    width = 2.0 * (q75 - q25) * v.size ** (-1.0 / 3.0)
    span = float(v.max() - v.min())
    n = int(np.ceil(span / width)) if width > 0 and span > 0 else MIN_BINS
    return np.histogram_bin_edges(v, bins=min(max(n, MIN_BINS), MAX_BINS))


def ps_curve(model: DetectorModel, k: int, n_points: int = PS_CURVE_POINTS):
    sf = model.score_functions[k]
    lo = sf.wrong.mean - 4 * sf.wrong.std
    hi = sf.correct.mean + 4 * sf.correct.std
    x = np.linspace(lo, hi, n_points)
    return x, probability_scores(sf, x)


def distribution_report(model: DetectorModel, splits: Mapping[str, Dataset], n_points: int = PS_CURVE_POINTS) -> DistributionReport:
    """Per-class logit histograms (correct / wrong / OOD) and PS curves.

    Histograms of one class and split share Freedman-Diaconis edges computed
    over the pooled column. Series without samples are omitted for OOD and
    unlabeled data.
    """
    if n_points < 200:
        raise PsiOodError("the PS curve needs at least 200 points")
    for name, ds in splits.items():
        if ds.n_classes != model.n_classes:
            raise DimensionMismatchError(
                f"split {name!r} has {ds.n_classes} logit columns, model has {model.n_classes}"
            )
        has_class_labels = bool(np.any(ds.labels >= 0))
        if has_class_labels and ds.class_names != model.class_names:
            raise PsiOodError(f"split {name!r} has a different class manifest than the model")
    out = []
    for k in range(model.n_classes):
        x, y = ps_curve(model, k, n_points)
        hists = {}
        for name, ds in splits.items():
            col = ds.logits[:, k]
            lab = ds.labels
            edges = bin_edges(col)

            def h(mask):
                return np.histogram(col[mask], bins=edges)[0]

            ood_mask = lab == OOD
            unl_mask = lab == UNKNOWN
            hists[name] = SplitHistogram(
                edges=edges,
                correct=h(lab == k),
                wrong=h((lab >= 0) & (lab != k)),
                ood=h(ood_mask) if ood_mask.any() else None,
                unlabeled=h(unl_mask) if unl_mask.any() else None,
            )
        out.append(ClassDistribution(k, model.class_names[k], x, y, hists))
    return DistributionReport(tuple(out))
