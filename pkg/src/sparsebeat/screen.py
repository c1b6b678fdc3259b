"""Outlier screening of training beats by approximation complexity.

Every beat is approximated to a fixed prdn with a general-purpose dictionary;
beats needing an atypical number of atoms ``k`` (outside ``mean +/- s*std``)
are flagged for removal before dictionary learning.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sparsebeat.beats import TrainingSet
from sparsebeat.pursuit import Algorithm, Dictionary, approximate_batch


@dataclass
class ScreeningReport:
    k_values: np.ndarray
    mean_k: float
    std_k: float
    window: tuple[float, float]
    rejected: np.ndarray
    rejected_provenance: list[tuple[str, int]]
    failures: dict[int, str] = field(default_factory=dict)
    std_multiplier: float = 3.0
    prdn_target: float = 9.0
    algorithm: str = Algorithm.OOMP.value

    @property
    def total(self) -> int:
        return int(self.k_values.size)

    @property
    def rejection_fraction(self) -> float:
        """Percentage of beats rejected."""
        return 100.0 * self.rejected.size / self.total if self.total else 0.0

    def histogram(self) -> tuple[np.ndarray, np.ndarray]:
        """(k bin values, counts) over the successfully approximated beats."""
        ok = np.ones(self.total, dtype=bool)
        ok[list(self.failures)] = False
        ks = self.k_values[ok]
        if ks.size == 0:
            return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
        counts = np.bincount(ks)
        bins = np.arange(counts.size)
        return bins, counts

    def to_dict(self) -> dict:
        bins, counts = self.histogram()
        return {
            "algorithm": self.algorithm,
            "prdn_target": self.prdn_target,
            "std_multiplier": self.std_multiplier,
            "total": self.total,
            "mean_k": self.mean_k,
            "std_k": self.std_k,
            "window": list(self.window),
            "rejection_fraction": self.rejection_fraction,
            "histogram": {"k": bins.tolist(), "count": counts.tolist()},
            "rejected": [
                {"index": int(i), "record": rec, "sample_index": smp,
                 "k": int(self.k_values[i]), "reason": self.failures.get(int(i), "k outside window")}
                for i, (rec, smp) in zip(self.rejected, self.rejected_provenance)
            ],
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def write_histogram_csv(self, path) -> None:
        bins, counts = self.histogram()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "count"])
            writer.writerows(zip(bins.tolist(), counts.tolist()))


def screening_window(k_values: np.ndarray, std_multiplier: float) -> tuple[float, float, float, float]:
    """Return (mean, std, lower, upper) of the acceptance window."""
    k_values = np.asarray(k_values, dtype=np.float64)
    mean = float(k_values.mean())
    std = float(k_values.std())
    if std == 0.0:
        lower, upper = mean - 1.0, mean + 1.0
    else:
        lower, upper = mean - std_multiplier * std, mean + std_multiplier * std
    return mean, std, max(lower, 0.0), upper


def screen_training_set(
    training: TrainingSet,
    wavelet_dict: Dictionary,
    prdn_target: float = 9.0,
    std_multiplier: float = 3.0,
    algorithm: Algorithm | str = Algorithm.OOMP,
    max_iterations: int | None = None,
    n_jobs: int = 1,
) -> ScreeningReport:
    """Single-pass screening: beats with ``k <= lower`` or ``k >= upper`` are rejected.

    Beats whose approximation raises are rejected outright and excluded from
    the window statistics.
    """
    if training.size == 0:
        raise ValueError("cannot screen an empty training set")
    if not prdn_target > 0:
        raise ValueError("prdn_target must be positive")
    if std_multiplier < 0:
        raise ValueError("std_multiplier must be nonnegative")
    algorithm = Algorithm.parse(algorithm)
    results = approximate_batch(
        training.beats, wavelet_dict, algorithm, prdn_target, max_iterations, n_jobs=n_jobs
    )
    k_values = np.zeros(training.size, dtype=np.int64)
    failures: dict[int, str] = {}
    for i, res in enumerate(results):
        if isinstance(res, Exception):
            failures[i] = f"approximation failed: {res}"
        else:
            k_values[i] = res.k
    ok = np.ones(training.size, dtype=bool)
    ok[list(failures)] = False
    if not ok.any():
        raise ValueError("every beat failed to approximate")

    mean, std, lower, upper = screening_window(k_values[ok], std_multiplier)
    outside = (k_values <= lower) | (k_values >= upper)
    rejected = np.flatnonzero(outside | ~ok)
    return ScreeningReport(
        k_values=k_values,
        mean_k=mean,
        std_k=std,
        window=(lower, upper),
        rejected=rejected,
        rejected_provenance=[training.provenance(int(i)) for i in rejected],
        failures=failures,
        std_multiplier=float(std_multiplier),
        prdn_target=float(prdn_target),
        algorithm=algorithm.value,
    )


def apply_screening(training: TrainingSet, report: ScreeningReport) -> TrainingSet:
    return training.without(report.rejected)
