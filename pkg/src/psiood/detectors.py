"""Probability-score interpreter and the softmax / energy baselines."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DetectorModel, ps_matrix
from .errors import DimensionMismatchError, NonFiniteError, PsiOodError, UncalibratedModelError


class Code(str, enum.Enum):
    GREEN = "Green"
    YELLOW = "Yellow"
    RED = "Red"


class Subtype(str, enum.Enum):
    CLEAR_RESULT = "ClearResult"
    BORDER_CASE_GREEN = "BorderCaseGreen"
    BORDER_CASE_YELLOW = "BorderCaseYellow"
    CONFUSING_EVIDENCE = "ConfusingEvidence"
    NOT_ENOUGH_EVIDENCE = "NotEnoughEvidence"
    OOD_SAMPLE = "OodSample"

    @property
    def code(self) -> Code:
        return _SUBTYPE_CODE[self]


_SUBTYPE_CODE = {
    Subtype.CLEAR_RESULT: Code.GREEN,
    Subtype.BORDER_CASE_GREEN: Code.GREEN,
    Subtype.BORDER_CASE_YELLOW: Code.YELLOW,
    Subtype.CONFUSING_EVIDENCE: Code.RED,
    Subtype.NOT_ENOUGH_EVIDENCE: Code.RED,
    Subtype.OOD_SAMPLE: Code.RED,
}

# integer codes used by the batch interpreter, index into this tuple
SUBTYPES = tuple(Subtype)


@dataclass(frozen=True)
class Verdict:
    code: Code
    subtype: Subtype
    predicted_class: int | None = None

    def __post_init__(self):
        if self.subtype.code is not self.code:
            raise PsiOodError(f"subtype {self.subtype.value} does not belong to code {self.code.value}")
        if (self.code is Code.RED) != (self.predicted_class is None):
            raise PsiOodError("predicted_class must be present exactly for Green and Yellow verdicts")


@dataclass(frozen=True)
class DetectorDecision:
    sample_id: str
    is_ood: bool
    predicted_class: int | None
    raw_score: float
    verdict: Verdict | None = None

    def __post_init__(self):
        if self.is_ood and self.predicted_class is not None:
            raise PsiOodError("an OOD decision cannot carry a predicted class")
        if not self.is_ood and self.predicted_class is None:
            raise PsiOodError("an in-distribution decision needs a predicted class")


class BaselineKind(str, enum.Enum):
    MAX_SOFTMAX = "MaxSoftmax"
    ENERGY = "Energy"


@dataclass(frozen=True)
class BaselineConfig:
    kind: BaselineKind
    threshold: float

    def __post_init__(self):
        object.__setattr__(self, "kind", BaselineKind(self.kind))
        if not np.isfinite(self.threshold):
            raise PsiOodError("baseline threshold must be finite")
        if self.kind is BaselineKind.MAX_SOFTMAX and not (0.0 < self.threshold < 1.0):
            raise PsiOodError(f"max-softmax threshold must lie in (0, 1), got {self.threshold!r}")


def _as_logits(logits) -> np.ndarray:
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] < 1:
        raise DimensionMismatchError("expected a logit vector or a 2-d batch of them")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("logits must be finite")
    return x


def softmax(logits) -> np.ndarray:
    """Softmax along the last axis with max subtraction (no overflow)."""
    x = _as_logits(logits)
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def energy_score(logits):
    """``logsumexp(logits)``, the negative free energy at temperature 1.

    Low values indicate OOD. Returns a float for a vector and an array for a
    batch.
    """
    x = _as_logits(logits)
    m = x.max(axis=-1, keepdims=True)
    s = np.log(np.exp(x - m).sum(axis=-1, keepdims=True)) + m
    s = s[..., 0]
    return float(s) if x.ndim == 1 else s


def _check_threshold(t: float):
    if not (0.0 < t < 1.0):
        raise PsiOodError(f"interpreter threshold must lie in (0, 1), got {t!r}")


def interpret(ps, t: float) -> Verdict:
    """Rule-table interpretation of one probability-score vector.

    Scores are split into high positive (``>= t``), low positive
    (``0 < s < t``), low negative (``-t < s <= 0``) and high negative
    (``<= -t``). Exactly one high positive gives a class; anything else is Red.
    """
    ps = np.asarray(ps, dtype=np.float64)
    if ps.ndim != 1 or ps.size < 1:
        raise DimensionMismatchError("interpret expects a single score vector")
    if np.any(np.isnan(ps)) or np.any(np.abs(ps) > 1.0):
        raise PsiOodError("probability scores must lie in [-1, 1]")
    _check_threshold(t)
    high = np.flatnonzero(ps >= t)
    n_low_pos = int(np.count_nonzero((ps > 0) & (ps < t)))
    n_low_neg = int(np.count_nonzero((ps > -t) & (ps <= 0)))
    if len(high) >= 2:
        return Verdict(Code.RED, Subtype.CONFUSING_EVIDENCE)
    if len(high) == 0:
        if n_low_pos:
            return Verdict(Code.RED, Subtype.NOT_ENOUGH_EVIDENCE)
        return Verdict(Code.RED, Subtype.OOD_SAMPLE)
    k = int(high[0])
    if n_low_pos:
        return Verdict(Code.YELLOW, Subtype.BORDER_CASE_YELLOW, k)
    if n_low_neg:
        return Verdict(Code.GREEN, Subtype.BORDER_CASE_GREEN, k)
    return Verdict(Code.GREEN, Subtype.CLEAR_RESULT, k)


def interpret_batch(ps: np.ndarray, t: float):
    """Vectorised :func:`interpret`.

    Returns ``(subtype_index, predicted)`` where ``subtype_index`` indexes
    :data:`SUBTYPES` and ``predicted`` is -1 for Red rows.
    """
    ps = np.asarray(ps, dtype=np.float64)
    _check_threshold(t)
    high = ps >= t
    H = high.sum(axis=1)
    L = ((ps > 0) & (ps < t)).sum(axis=1)
    LN = ((ps > -t) & (ps <= 0)).sum(axis=1)
    sub = np.select(
        [H >= 2, (H == 0) & (L > 0), (H == 0), L > 0, LN > 0],
        [3, 4, 5, 2, 1],
        default=0,
    )
    predicted = np.where(H == 1, np.argmax(high, axis=1), -1)
    return sub, predicted


def _require_threshold(model: DetectorModel) -> float:
    if model.psi_threshold is None:
        raise UncalibratedModelError()
    return model.psi_threshold


def psi_detect(model: DetectorModel, logits, sample_id: str = "") -> DetectorDecision:
    t = _require_threshold(model)
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatchError("psi_detect expects a single logit vector")
    ps = ps_matrix(model, x[None, :])[0]
    v = interpret(ps, t)
    return DetectorDecision(
        sample_id,
        is_ood=v.code is Code.RED,
        predicted_class=v.predicted_class,
        raw_score=float(ps.max()),
        verdict=v,
    )


def psi_detect_batch(model: DetectorModel, logits, ids: Sequence[str] | None = None, t: float | None = None):
    """Decisions for a batch; ``t`` overrides the model threshold."""
    if t is None:
        t = _require_threshold(model)
    ps = ps_matrix(model, logits)
    sub, pred = interpret_batch(ps, t)
    raw = ps.max(axis=1)
    ids = _ids(ids, len(ps))
    out = []
    for i in range(len(ps)):
        st = SUBTYPES[sub[i]]
        p = int(pred[i]) if pred[i] >= 0 else None
        out.append(DetectorDecision(ids[i], p is None, p, float(raw[i]), Verdict(st.code, st, p)))
    return out


def _ids(ids, n):
    if ids is None:
        return [str(i) for i in range(n)]
    if len(ids) != n:
        raise DimensionMismatchError("one id per logit vector is required")
    return list(ids)


def _baseline_decisions(scores, argmax, threshold, ids):
    ood = scores < threshold
    return [
        DetectorDecision(ids[i], bool(ood[i]), None if ood[i] else int(argmax[i]), float(scores[i]))
        for i in range(len(scores))
    ]


def max_softmax_detect(config: BaselineConfig, logits, sample_id: str = "") -> DetectorDecision:
    if config.kind is not BaselineKind.MAX_SOFTMAX:
        raise PsiOodError("config is not a max-softmax config")
    x = _as_logits(logits)
    if x.ndim != 1:
        raise DimensionMismatchError("expected a single logit vector")
    return max_softmax_detect_batch(config, x[None, :], [sample_id])[0]


def max_softmax_detect_batch(config: BaselineConfig, logits, ids=None):
    if config.kind is not BaselineKind.MAX_SOFTMAX:
        raise PsiOodError("config is not a max-softmax config")
    x = np.atleast_2d(_as_logits(logits))
    p = softmax(x).max(axis=1)
    return _baseline_decisions(p, np.argmax(x, axis=1), config.threshold, _ids(ids, len(x)))


def energy_detect(config: BaselineConfig, logits, sample_id: str = "") -> DetectorDecision:
    if config.kind is not BaselineKind.ENERGY:
        raise PsiOodError("config is not an energy config")
    x = _as_logits(logits)
    if x.ndim != 1:
        raise DimensionMismatchError("expected a single logit vector")
    return energy_detect_batch(config, x[None, :], [sample_id])[0]


def energy_detect_batch(config: BaselineConfig, logits, ids=None):
    if config.kind is not BaselineKind.ENERGY:
        raise PsiOodError("config is not an energy config")
    x = np.atleast_2d(_as_logits(logits))
    s = np.atleast_1d(energy_score(x))
    return _baseline_decisions(s, np.argmax(x, axis=1), config.threshold, _ids(ids, len(x)))
