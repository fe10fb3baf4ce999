"""Seeded corruption of clean label vectors with symmetric or asymmetric
(class-conditional) noise.

All randomness comes from a Philox counter-based generator keyed on the
spec's seed, so corrupted corpora are bit-reproducible across runs and
platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .numerics import LabelVector


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


@dataclass(frozen=True)
class ClassFlipMap:
    """Fixed source -> target class flips for asymmetric noise."""

    pairs: tuple
    num_classes: int

    def __post_init__(self):
        pairs = tuple((int(s), int(d)) for s, d in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        sources = [s for s, _ in pairs]
        if len(set(sources)) != len(sources):
            raise InvalidInputError("flip-map sources must be distinct")
        for s, d in pairs:
            if s == d:
                raise InvalidInputError(f"flip {s}->{d} maps a class to itself")
            if not (0 <= s < self.num_classes and 0 <= d < self.num_classes):
                raise InvalidInputError(
                    f"flip {s}->{d} outside [0, {self.num_classes})"
                )

    def target_table(self) -> np.ndarray:
        """Per-class flip target, -1 for classes that are not sources."""
        table = np.full(self.num_classes, -1, dtype=np.int64)
        for s, d in self.pairs:
            table[s] = d
        return table


def parse_flip_map(text: str, num_classes: int) -> ClassFlipMap:
    """Parse a "src>dst,src>dst" comma list as used in config files."""
    pairs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if ">" not in item:
            raise InvalidInputError(f"bad flip entry {item!r}, expected 'src>dst'")
        src, dst = item.split(">", 1)
        try:
            pairs.append((int(src), int(dst)))
        except ValueError as exc:
            raise InvalidInputError(f"bad flip entry {item!r}: {exc}") from None
    if not pairs:
        raise InvalidInputError("flip map is empty")
    return ClassFlipMap(tuple(pairs), num_classes)


def builtin_flip_map(name: str) -> ClassFlipMap:
    """Class-flip maps for the three benchmark datasets.

    mnist: 7->1, 2->7, 5<->6, 3->8.
    cifar10 (standard class indices): truck->automobile, bird->airplane,
    deer->horse, cat<->dog.
    cifar100: 20 blocks of 5 consecutive classes; within each block every
    class flips circularly to the next one.
    """
    if name == "mnist":
        return ClassFlipMap(((7, 1), (2, 7), (5, 6), (6, 5), (3, 8)), 10)
    if name == "cifar10":
        return ClassFlipMap(((9, 1), (2, 0), (4, 7), (3, 5), (5, 3)), 10)
    if name == "cifar100":
        pairs = []
        for c in range(100):
            base = 5 * (c // 5)
            pairs.append((c, base + (c - base + 1) % 5))
        return ClassFlipMap(tuple(pairs), 100)
    raise InvalidInputError(f"unknown flip map {name!r}")


@dataclass(frozen=True)
class NoiseSpec:
    """Noise kind, rate, optional flip map, and the corruption seed."""

    kind: str
    rate: float
    seed: int = 0
    flip_map: ClassFlipMap | None = None

    def __post_init__(self):
        if self.kind == "symmetric":
            if not 0.0 <= self.rate <= 1.0:
                raise InvalidInputError("symmetric rate must lie in [0, 1]")
        elif self.kind == "asymmetric":
            if not 0.0 <= self.rate < 0.5:
                raise InvalidInputError("asymmetric rate must lie in [0, 0.5)")
            if self.flip_map is None:
                raise InvalidInputError("asymmetric noise requires a flip map")
        else:
            raise InvalidInputError(f"unknown noise kind {self.kind!r}")


def corrupt_symmetric(labels: LabelVector, rate: float, seed: int) -> LabelVector:
    """Flip each label with probability ``rate`` to a class drawn uniformly
    from the other num_classes-1 classes (never back to itself)."""
    if not 0.0 <= rate <= 1.0:
        raise InvalidInputError("rate must lie in [0, 1]")
    k = labels.num_classes
    gen = _rng(seed)
    n = len(labels)
    flip = gen.random(n) < rate
    offsets = gen.integers(1, k, size=n)
    corrupted = np.where(flip, (labels.labels + offsets) % k, labels.labels)
    return LabelVector(corrupted, k)


def corrupt_asymmetric(
    labels: LabelVector, flip_map: ClassFlipMap, rate: float, seed: int
) -> LabelVector:
    """Flip source-class labels to their mapped target with probability
    ``rate``; labels of non-source classes are never touched."""
    if not 0.0 <= rate < 0.5:
        raise InvalidInputError("asymmetric rate must lie in [0, 0.5)")
    if flip_map.num_classes != labels.num_classes:
        raise InvalidInputError(
            f"flip map is over {flip_map.num_classes} classes, "
            f"labels over {labels.num_classes}"
        )
    table = flip_map.target_table()
    gen = _rng(seed)
    n = len(labels)
    flip = gen.random(n) < rate
    targets = table[labels.labels]
    corrupted = np.where(flip & (targets >= 0), targets, labels.labels)
    return LabelVector(corrupted, labels.num_classes)


def corrupt(labels: LabelVector, spec: NoiseSpec) -> LabelVector:
    """Apply a NoiseSpec to a label vector."""
    if spec.kind == "symmetric":
        return corrupt_symmetric(labels, spec.rate, spec.seed)
    return corrupt_asymmetric(labels, spec.flip_map, spec.rate, spec.seed)


def empirical_noise_rate(clean: LabelVector, noisy: LabelVector) -> float:
    """Fraction of positions where two label vectors differ."""
    if len(clean) != len(noisy):
        raise InvalidInputError(
            f"length mismatch: {len(clean)} vs {len(noisy)}"
        )
    if len(clean) == 0:
        raise InvalidInputError("label vectors are empty")
    return float(np.mean(clean.labels != noisy.labels))
