"""Containers for frame-labeled data and label inventories."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import IncompleteTableError, InventoryError, ShapeError

LABEL_KINDS = ("senone", "phone")


@dataclass(frozen=True)
class LabelInventory:
    """A task's label space; valid ids are ``0 .. size-1``."""

    task_id: str
    size: int
    kind: str = "senone"

    def __post_init__(self) -> None:
        if self.size < 1:
            raise InventoryError(f"inventory size must be >= 1, got {self.size}")
        if self.kind not in LABEL_KINDS:
            raise InventoryError(f"unknown label kind {self.kind!r}")


@dataclass(frozen=True)
class SenoneToPhoneTable:
    """Total collapse function from a task's senones to its phones."""

    task_id: str
    table: np.ndarray
    num_phones: int | None = None

    def __post_init__(self) -> None:
        table = np.asarray(self.table, dtype=np.int64)
        if table.ndim != 1 or table.size == 0:
            raise IncompleteTableError("senone-to-phone table must be a non-empty 1-d array")
        if (table < 0).any():
            raise IncompleteTableError("senone-to-phone table contains negative phone ids")
        object.__setattr__(self, "table", table)
        num_phones = self.num_phones
        if num_phones is None:
            num_phones = int(table.max()) + 1
        elif int(table.max()) >= num_phones:
            raise IncompleteTableError(
                f"table maps to phone {int(table.max())} but declares only {num_phones} phones"
            )
        object.__setattr__(self, "num_phones", int(num_phones))

    @property
    def num_senones(self) -> int:
        return int(self.table.size)

    def __call__(self, senone: int) -> int:
        return int(self.table[senone])


@dataclass(frozen=True)
class Frame:
    """One labeled observation."""

    features: np.ndarray
    language: str
    senone_label: int
    utterance_id: int


@dataclass
class FrameSet:
    """Column-oriented batch of frames from a single language.

    Feature rows, labels and utterance ids are parallel arrays, so
    training and mapping code stays vectorized while callers can still
    think in terms of individual :class:`Frame` records.
    """

    language: str
    features: np.ndarray
    labels: np.ndarray
    utterance_ids: np.ndarray

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.utterance_ids = np.asarray(self.utterance_ids, dtype=np.int64)
        if self.features.ndim != 2:
            raise ShapeError(f"features must be 2-d, got shape {self.features.shape}")
        n = self.features.shape[0]
        if self.labels.shape != (n,) or self.utterance_ids.shape != (n,):
            raise ShapeError("features, labels and utterance_ids must have matching lengths")

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def frame(self, i: int) -> Frame:
        return Frame(
            features=self.features[i],
            language=self.language,
            senone_label=int(self.labels[i]),
            utterance_id=int(self.utterance_ids[i]),
        )

    def __iter__(self) -> Iterator[Frame]:
        return (self.frame(i) for i in range(len(self)))

    def take(self, index: np.ndarray) -> "FrameSet":
        return FrameSet(
            self.language, self.features[index], self.labels[index], self.utterance_ids[index]
        )

    def for_utterances(self, utterances: Iterable[int]) -> "FrameSet":
        wanted = np.asarray(sorted(set(int(u) for u in utterances)), dtype=np.int64)
        return self.take(np.flatnonzero(np.isin(self.utterance_ids, wanted)))

    @classmethod
    def from_frames(cls, frames: Sequence[Frame]) -> "FrameSet":
        if not frames:
            raise ShapeError("cannot build a FrameSet from zero frames without a feature dim")
        languages = {f.language for f in frames}
        if len(languages) != 1:
            raise InventoryError(f"frames span multiple languages: {sorted(languages)}")
        return cls(
            language=frames[0].language,
            features=np.stack([f.features for f in frames]),
            labels=np.asarray([f.senone_label for f in frames], dtype=np.int64),
            utterance_ids=np.asarray([f.utterance_id for f in frames], dtype=np.int64),
        )

    @classmethod
    def concat(cls, sets: Sequence["FrameSet"], language: str | None = None) -> "FrameSet":
        if not sets:
            raise ShapeError("cannot concatenate zero frame sets")
        if language is None:
            languages = {s.language for s in sets}
            if len(languages) != 1:
                raise InventoryError(f"frame sets span multiple languages: {sorted(languages)}")
            language = sets[0].language
        dims = {s.feature_dim for s in sets}
        if len(dims) != 1:
            raise ShapeError(f"frame sets disagree on feature dim: {sorted(dims)}")
        return cls(
            language=language,
            features=np.concatenate([s.features for s in sets], axis=0),
            labels=np.concatenate([s.labels for s in sets]),
            utterance_ids=np.concatenate([s.utterance_ids for s in sets]),
        )
