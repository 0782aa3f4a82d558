"""Seeded synthetic logit datasets with known ground truth.

For an in-distribution sample of class ``k`` the logit of neuron ``k`` is
drawn from that class's own-logit Gaussian and every other neuron ``j`` from
class ``j``'s cross-logit Gaussian. OOD samples draw all neurons from a single
OOD profile. Components are independent.

Every (split, component) pair owns a Philox counter-based stream. Sample ``i``
uses raw words ``2i`` and ``2i + 1`` of that stream through a Box-Muller
transform, so a draw depends only on ``(seed, split, sample, component)``:
growing a split or adding classes never changes existing values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import OOD, Dataset
from .errors import InvalidSpecError

SPLITS = ("train", "validation", "test", "ood")


@dataclass(frozen=True)
class SynthSpec:
    class_count: int
    own: tuple  # per class (mu, sigma)
    cross: tuple  # per class (mu, sigma)
    ood_profile: tuple = (0.0, 1.0)
    counts: dict = field(default_factory=lambda: {"train": 1000, "validation": 1000, "test": 1000, "ood": 1000})
    seed: int = 0
    class_names: tuple | None = None

    def __post_init__(self):
        C = self.class_count
        if not isinstance(C, (int, np.integer)) or C < 2:
            raise InvalidSpecError("class_count must be an integer >= 2")
        own = tuple(tuple(float(v) for v in p) for p in self.own)
        cross = tuple(tuple(float(v) for v in p) for p in self.cross)
        ood = tuple(float(v) for v in self.ood_profile)
        object.__setattr__(self, "own", own)
        object.__setattr__(self, "cross", cross)
        object.__setattr__(self, "ood_profile", ood)
        if len(own) != C or len(cross) != C:
            raise InvalidSpecError("own and cross need one (mu, sigma) pair per class")
        for pair in own + cross + (ood,):
            if len(pair) != 2 or not np.all(np.isfinite(pair)):
                raise InvalidSpecError("each Gaussian is a finite (mu, sigma) pair")
            if pair[1] <= 0:
                raise InvalidSpecError("sigma must be positive")
        for k in range(C):
            if not own[k][0] > cross[k][0]:
                raise InvalidSpecError(f"class {k}: own-logit mean must exceed cross-logit mean")
        counts = dict(self.counts)
        for name in counts:
            if name not in SPLITS:
                raise InvalidSpecError(f"unknown split {name!r}")
        for name in SPLITS:
            n = counts.setdefault(name, 0)
            if not isinstance(n, (int, np.integer)) or n < 0:
                raise InvalidSpecError(f"count for split {name!r} must be a non-negative integer")
        object.__setattr__(self, "counts", counts)
        if not (0 <= int(self.seed) < 2**64):
            raise InvalidSpecError("seed must be a 64-bit unsigned integer")
        names = self.class_names
        if names is None:
            names = tuple(f"class{k}" for k in range(C))
        names = tuple(str(n) for n in names)
        if len(names) != C or len(set(names)) != C:
            raise InvalidSpecError("class_names must be C distinct names")
        object.__setattr__(self, "class_names", names)

    @classmethod
    def symmetric(cls, class_count, own=(5.0, 1.0), cross=(0.0, 1.0), ood_profile=(0.0, 1.0), counts=None, seed=0):
        """Same own/cross Gaussians for every class."""
        kw = {} if counts is None else {"counts": counts}
        return cls(class_count, (own,) * class_count, (cross,) * class_count, ood_profile, seed=seed, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        try:
            return cls(
                class_count=d["class_count"],
                own=d["own"],
                cross=d["cross"],
                ood_profile=d.get("ood_profile", (0.0, 1.0)),
                counts=d.get("counts", {}),
                seed=d.get("seed", 0),
                class_names=d.get("class_names"),
            )
        except (KeyError, TypeError) as e:
            raise InvalidSpecError(f"malformed synth spec: {e}") from None

    def to_dict(self) -> dict:
        return {
            "class_count": self.class_count,
            "class_names": list(self.class_names),
            "own": [list(p) for p in self.own],
            "cross": [list(p) for p in self.cross],
            "ood_profile": list(self.ood_profile),
            "counts": dict(self.counts),
            "seed": int(self.seed),
        }


_U53 = 2.0 ** -53


def _standard_normal(spec: SynthSpec, split: str, n: int, C: int) -> np.ndarray:
    z = np.empty((n, C))
    for k in range(C):
        ss = np.random.SeedSequence(int(spec.seed), spawn_key=(SPLITS.index(split), k))
        words = np.random.Philox(ss).random_raw(2 * n).reshape(n, 2)
        u = (words >> np.uint64(11)).astype(np.float64) * _U53  # [0, 1)
        z[:, k] = np.sqrt(-2.0 * np.log1p(-u[:, 0])) * np.cos(2.0 * np.pi * u[:, 1])
    return z


def oracle_labels(spec: SynthSpec, split: str) -> np.ndarray:
    """Generation-time labels of a split: class blocks, or all OOD."""
    if split not in SPLITS:
        raise InvalidSpecError(f"unknown split {split!r}")
    n = spec.counts[split]
    if split == "ood":
        return np.full(n, OOD, dtype=np.int64)
    return np.repeat(np.arange(spec.class_count, dtype=np.int64), n)


def generate_split(spec: SynthSpec, split: str) -> Dataset:
    labels = oracle_labels(spec, split)
    n, C = len(labels), spec.class_count
    z = _standard_normal(spec, split, n, C)
    if split == "ood":
        mu, sd = spec.ood_profile
        logits = mu + sd * z
    else:
        own = np.array(spec.own)
        cross = np.array(spec.cross)
        mu = np.broadcast_to(cross[:, 0], (n, C)).copy()
        sd = np.broadcast_to(cross[:, 1], (n, C)).copy()
        rows = np.arange(n)
        mu[rows, labels] = own[labels, 0]
        sd[rows, labels] = own[labels, 1]
        logits = mu + sd * z
    ids = [f"{split}-{i:06d}" for i in range(n)]
    return Dataset(spec.class_names, ids, labels, logits)


def generate(spec: SynthSpec) -> dict:
    """All four splits keyed by name."""
    return {name: generate_split(spec, name) for name in SPLITS}
