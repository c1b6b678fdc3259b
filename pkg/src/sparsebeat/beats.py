"""Column-major container for segmented heartbeats with labels and provenance."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Beats stored one per column of ``beats`` (shape ``(n_q, q)``)."""

    beats: np.ndarray
    labels: np.ndarray
    records: np.ndarray
    samples: np.ndarray

    def __post_init__(self):
        beats = np.asarray(self.beats, dtype=np.float64)
        if beats.ndim != 2:
            raise ValueError("beats must be a 2-D array with one beat per column")
        q = beats.shape[1]
        labels = np.asarray(self.labels, dtype=str).reshape(-1)
        records = np.asarray(self.records, dtype=str).reshape(-1)
        samples = np.asarray(self.samples, dtype=np.int64).reshape(-1)
        if not (labels.size == records.size == samples.size == q):
            raise ValueError("labels, records and samples must have one entry per beat")
        object.__setattr__(self, "beats", beats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "records", records)
        object.__setattr__(self, "samples", samples)

    @classmethod
    def from_beats(cls, beats, label: str = "", record: str = "", samples=None) -> "TrainingSet":
        beats = np.asarray(beats, dtype=np.float64)
        q = beats.shape[1]
        return cls(
            beats,
            np.full(q, label),
            np.full(q, record),
            np.arange(q) if samples is None else samples,
        )

    @classmethod
    def empty(cls, n_q: int) -> "TrainingSet":
        return cls(np.zeros((n_q, 0)), [], [], [])

    @property
    def n_q(self) -> int:
        return self.beats.shape[0]

    @property
    def size(self) -> int:
        return self.beats.shape[1]

    def __len__(self) -> int:
        return self.size

    def provenance(self, i: int) -> tuple[str, int]:
        return str(self.records[i]), int(self.samples[i])

    def subset(self, selector) -> "TrainingSet":
        """Select beats by boolean mask or integer index array."""
        sel = np.asarray(selector)
        if sel.dtype != bool:
            sel = sel.astype(np.intp)
        return TrainingSet(
            self.beats[:, sel], self.labels[sel], self.records[sel], self.samples[sel]
        )

    def of_class(self, label: str) -> "TrainingSet":
        return self.subset(self.labels == label)

    def without(self, indices) -> "TrainingSet":
        keep = np.ones(self.size, dtype=bool)
        keep[np.asarray(indices, dtype=np.intp)] = False
        return self.subset(keep)

    def class_counts(self) -> dict[str, int]:
        names, counts = np.unique(self.labels, return_counts=True)
        return {str(n): int(c) for n, c in zip(names, counts)}

    def check_trainable(self, m: int | None = None) -> None:
        if not np.all(np.isfinite(self.beats)):
            raise ValueError("training beats contain non-finite values")
        flat = np.ptp(self.beats, axis=0) == 0 if self.size else np.zeros(0, bool)
        if flat.any():
            rec, smp = self.provenance(int(np.argmax(flat)))
            raise ValueError(f"constant beat in training set (record {rec}, sample {smp})")
        if m is not None and self.size < m:
            warnings.warn(
                f"training set has {self.size} beats but {m} atoms requested; "
                "expect unused atoms to be pruned",
                stacklevel=2,
            )


def concatenate(sets: list[TrainingSet]) -> TrainingSet:
    sets = [s for s in sets if s.size] or sets[:1]
    if not sets:
        raise ValueError("nothing to concatenate")
    return TrainingSet(
        np.concatenate([s.beats for s in sets], axis=1),
        np.concatenate([s.labels for s in sets]),
        np.concatenate([s.records for s in sets]),
        np.concatenate([s.samples for s in sets]),
    )
