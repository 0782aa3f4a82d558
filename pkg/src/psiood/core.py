"""Domain types, Gaussian fitting and the per-class probability score.

Each output neuron of a classifier gets two 1-d Gaussians: one fitted on its
logit for samples of its own class ("correct") and one for all other samples
("wrong"). A logit is mapped to a bounded score in [-1, 1] through the
equal-prior two-class posterior, clamped by input value outside
``[mu_wrong, mu_correct]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    InsufficientSamplesError,
    NonDiscriminativeClassError,
    NonFiniteError,
    PsiOodError,
)

SIGMA_FLOOR = 1e-6

# label codes; class labels are 0..C-1
OOD = -1
UNKNOWN = -2


@dataclass(frozen=True, eq=False)
class LabeledSample:
    id: str
    label: int
    logits: np.ndarray

    @property
    def is_ood(self) -> bool:
        return self.label == OOD


class Dataset:
    """Logit matrix with a class manifest, sample ids and labels.

    ``labels`` holds class indices, :data:`OOD` or :data:`UNKNOWN`.
    """

    def __init__(self, class_names: Sequence[str], ids: Sequence[str], labels, logits):
        class_names = tuple(str(c) for c in class_names)
        if len(class_names) < 2:
            raise PsiOodError("a dataset needs at least 2 classes")
        if any(not c for c in class_names):
            raise PsiOodError("class names must be non-empty")
        if len(set(class_names)) != len(class_names):
            raise PsiOodError("class names must be distinct")
        C = len(class_names)
        ids = tuple(str(i) for i in ids)
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        logits = np.asarray(logits, dtype=np.float64)
        if logits.size == 0:
            logits = logits.reshape(0, C)
        if logits.ndim != 2 or logits.shape[1] != C:
            raise DimensionMismatchError(
                f"logit matrix shape {logits.shape} does not match {C} classes"
            )
        if not (len(ids) == len(labels) == logits.shape[0]):
            raise PsiOodError("ids, labels and logits must have the same length")
        if len(set(ids)) != len(ids):
            raise PsiOodError("sample ids must be unique")
        if labels.size and (labels.max() >= C or labels.min() < UNKNOWN):
            raise PsiOodError("label out of range")
        if not np.all(np.isfinite(logits)):
            raise NonFiniteError("logits must be finite")
        logits.setflags(write=False)
        labels.setflags(write=False)
        self.class_names = class_names
        self.ids = ids
        self.labels = labels
        self.logits = logits

    @classmethod
    def from_samples(cls, class_names: Sequence[str], samples: Sequence[LabeledSample]) -> "Dataset":
        C = len(class_names)
        if samples:
            logits = np.vstack([np.asarray(s.logits, dtype=np.float64).reshape(1, -1) for s in samples])
        else:
            logits = np.empty((0, C))
        return cls(class_names, [s.id for s in samples], [s.label for s in samples], logits)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, i: int) -> LabeledSample:
        return LabeledSample(self.ids[i], int(self.labels[i]), self.logits[i])

    def __iter__(self) -> Iterator[LabeledSample]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, index) -> "Dataset":
        index = np.arange(len(self))[index]
        return Dataset(
            self.class_names,
            [self.ids[i] for i in index],
            self.labels[index],
            self.logits[index],
        )

    def __repr__(self) -> str:
        return f"Dataset(n={len(self)}, classes={list(self.class_names)})"


@dataclass(frozen=True)
class GaussianStats:
    mean: float
    std: float
    count: int


def fit_gaussian(samples) -> GaussianStats:
    """Maximum-likelihood normal fit: arithmetic mean and population std.

    The std is floored at :data:`SIGMA_FLOOR` so constant columns stay usable.
    """
    x = np.asarray(samples, dtype=np.float64).reshape(-1)
    if x.size < 2:
        raise InsufficientSamplesError(f"need at least 2 samples to fit a Gaussian, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("cannot fit a Gaussian to non-finite values")
    mean = float(np.mean(x))
    std = float(np.std(x))
    return GaussianStats(mean=mean, std=max(std, SIGMA_FLOOR), count=int(x.size))


@dataclass(frozen=True)
class ClassScoreFunction:
    class_index: int
    correct: GaussianStats
    wrong: GaussianStats

    def __post_init__(self):
        if not self.correct.mean > self.wrong.mean:
            raise NonDiscriminativeClassError(
                str(self.class_index), self.correct.mean, self.wrong.mean
            )
        if self.correct.std <= 0 or self.wrong.std <= 0:
            raise PsiOodError("standard deviations must be positive")

    def __call__(self, x: float) -> float:
        return probability_score(self, x)


_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _ps(x, mu_c, s_c, mu_w, s_w):
    # Vectorised score; every public entry point goes through here so scalar
    # and batch results are bit-identical.
    x = np.asarray(x, dtype=np.float64)
    zc = (x - mu_c) / s_c
    zw = (x - mu_w) / s_w
    llr = (0.5 * zw * zw - 0.5 * zc * zc) + (np.log(s_w) - np.log(s_c))
    ps = np.tanh(0.5 * llr)
    ps = np.where(x < mu_w, -1.0, ps)
    ps = np.where(x > mu_c, 1.0, ps)
    return ps


def log_likelihood_ratio(sf: ClassScoreFunction, x) -> np.ndarray:
    """``log N(x; correct) - log N(x; wrong)`` without clamping."""
    x = np.asarray(x, dtype=np.float64)
    c, w = sf.correct, sf.wrong
    lc = -0.5 * ((x - c.mean) / c.std) ** 2 - math.log(c.std) - _HALF_LOG_2PI
    lw = -0.5 * ((x - w.mean) / w.std) ** 2 - math.log(w.std) - _HALF_LOG_2PI
    return lc - lw


def probability_score(sf: ClassScoreFunction, x: float) -> float:
    """Probability score of logit ``x`` for one class, in [-1, 1].

    Inside ``[mu_wrong, mu_correct]`` this is ``P(correct|x) - P(wrong|x)``
    with equal priors, evaluated as ``tanh(LLR / 2)``. Below the wrong-class
    mean it is -1, above the correct-class mean +1.
    """
    if not math.isfinite(x):
        raise NonFiniteError("logit must be finite")
    c, w = sf.correct, sf.wrong
    return float(_ps(np.array([x]), c.mean, c.std, w.mean, w.std)[0])


def probability_scores(sf: ClassScoreFunction, xs) -> np.ndarray:
    """:func:`probability_score` over an array of logits."""
    xs = np.asarray(xs, dtype=np.float64)
    if not np.all(np.isfinite(xs)):
        raise NonFiniteError("logits must be finite")
    c, w = sf.correct, sf.wrong
    return _ps(xs, c.mean, c.std, w.mean, w.std)


@dataclass(frozen=True)
class DetectorModel:
    class_names: tuple
    score_functions: tuple
    psi_threshold: float | None = None
    metadata: dict = field(default_factory=dict, compare=True)

    def __post_init__(self):
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "score_functions", tuple(self.score_functions))
        if len(self.class_names) != len(self.score_functions):
            raise PsiOodError("one score function per class is required")
        if len(self.class_names) < 2:
            raise PsiOodError("a model needs at least 2 classes")
        for k, sf in enumerate(self.score_functions):
            if sf.class_index != k:
                raise PsiOodError("score functions must be ordered by class index 0..C-1")
        if self.psi_threshold is not None and not (0.0 < self.psi_threshold < 1.0):
            raise PsiOodError(f"psi_threshold must lie in (0, 1), got {self.psi_threshold!r}")

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def with_threshold(self, t: float | None) -> "DetectorModel":
        return replace(self, psi_threshold=t)

    def parameters(self):
        """Arrays ``(mu_correct, sigma_correct, mu_wrong, sigma_wrong)``."""
        sfs = self.score_functions
        return (
            np.array([s.correct.mean for s in sfs]),
            np.array([s.correct.std for s in sfs]),
            np.array([s.wrong.mean for s in sfs]),
            np.array([s.wrong.std for s in sfs]),
        )


def fit_model(
    train: Dataset,
    negative_source: Dataset | None = None,
    metadata: dict | None = None,
) -> DetectorModel:
    """Fit correct/wrong Gaussians for every output neuron.

    With ``negative_source`` the wrong-class distribution of every neuron is
    fitted on that set instead (e.g. a debris set of background crops).
    """
    C = train.n_classes
    if negative_source is not None and negative_source.n_classes != C:
        raise DimensionMismatchError(
            f"negative set has {negative_source.n_classes} logit columns, model has {C}"
        )
    labels = train.labels
    labelled = labels >= 0
    per_class = np.bincount(labels[labelled], minlength=C)
    for k in range(C):
        if per_class[k] < 2:
            raise InsufficientSamplesError(
                f"class {train.class_names[k]!r} has {int(per_class[k])} training samples, need at least 2"
            )
    sfs = []
    for k in range(C):
        own = labels == k
        correct = fit_gaussian(train.logits[own, k])
        if negative_source is None:
            wrong_values = train.logits[labelled & ~own, k]
        else:
            wrong_values = negative_source.logits[:, k]
        if wrong_values.size < 2:
            raise InsufficientSamplesError(
                f"class {train.class_names[k]!r} has {wrong_values.size} wrong-class samples, need at least 2"
            )
        wrong = fit_gaussian(wrong_values)
        if not correct.mean > wrong.mean:
            raise NonDiscriminativeClassError(train.class_names[k], correct.mean, wrong.mean)
        sfs.append(ClassScoreFunction(k, correct, wrong))
    meta = {"n_train": len(train)}
    if negative_source is not None:
        meta["n_negative"] = len(negative_source)
    meta.update(metadata or {})
    return DetectorModel(train.class_names, tuple(sfs), None, meta)


def _check_width(model: DetectorModel, logits: np.ndarray):
    if logits.shape[-1] != model.n_classes:
        raise DimensionMismatchError(
            f"logit vector has {logits.shape[-1]} entries, model has {model.n_classes} classes"
        )


def ps_vector(model: DetectorModel, logits) -> np.ndarray:
    """Per-class probability scores for one logit vector."""
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatchError("ps_vector expects a single logit vector")
    return ps_matrix(model, x[None, :])[0]


def ps_matrix(model: DetectorModel, logits) -> np.ndarray:
    """Probability scores for a batch of logit vectors, shape ``(n, C)``."""
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatchError("ps_matrix expects a 2-d logit array")
    _check_width(model, x)
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("logits must be finite")
    mu_c, s_c, mu_w, s_w = model.parameters()
    return _ps(x, mu_c, s_c, mu_w, s_w)
