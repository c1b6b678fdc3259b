"""Binary classification by relative sparsity under two learned dictionaries."""

from __future__ import annotations

import csv
import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from sparsebeat.beats import TrainingSet
from sparsebeat.pursuit import Algorithm, AtomicDecomposition, Dictionary, approximate_to_prdn

UNDECIDED = "undecided"


class Criterion(str, enum.Enum):
    """Decision rules.

    ``I_a``/``I_b`` compare atom counts and fall back to entropy or 1-norm on
    ties; ``II`` uses entropy alone and ``III`` the 1-norm alone.
    """

    I_a = "Ia"
    I_b = "Ib"
    II = "II"
    III = "III"

    @classmethod
    def parse(cls, value: "Criterion | str") -> "Criterion":
        if isinstance(value, cls):
            return value
        for member in cls:
            if value in (member.value, member.name):
                return member
        raise ValueError(f"unknown criterion {value!r}; expected one of Ia, Ib, II, III")


class TieBreak(str, enum.Enum):
    NONE = "none"
    ENTROPY = "entropy"
    NORM1 = "norm1"


def norm1(c) -> float:
    return float(np.sum(np.abs(np.asarray(c, dtype=np.float64))))


def shannon_entropy(c) -> float:
    """Entropy (natural log) of the distribution ``|c(n)| / ||c||_1``."""
    mags = np.abs(np.asarray(c, dtype=np.float64))
    total = mags.sum()
    if total == 0:
        raise ValueError("entropy undefined for an all-zero coefficient vector")
    p = mags[mags > 0] / total
    return float(max(0.0, -np.sum(p * np.log(p))))


def _entropy_or_zero(c) -> float:
    # an empty expansion is as sparse as it gets
    return shannon_entropy(c) if np.any(c) else 0.0


@dataclass(frozen=True)
class Decision:
    label: str
    k_a: int
    k_b: int
    entropy_a: float
    entropy_b: float
    norm1_a: float
    norm1_b: float
    tie_broken_by: TieBreak = TieBreak.NONE
    tolerance_unmet_a: bool = False
    tolerance_unmet_b: bool = False

    @property
    def flags(self) -> str:
        out = []
        if self.tolerance_unmet_a:
            out.append("tolerance_unmet_a")
        if self.tolerance_unmet_b:
            out.append("tolerance_unmet_b")
        return ";".join(out)


def _compare(a: float, b: float, label_a: str, label_b: str) -> str | None:
    if a < b:
        return label_a
    if b < a:
        return label_b
    return None


def decide(
    decomp_a: AtomicDecomposition,
    decomp_b: AtomicDecomposition,
    criterion: Criterion | str,
    label_a: str = "A",
    label_b: str = "B",
) -> Decision:
    criterion = Criterion.parse(criterion)
    k_a, k_b = decomp_a.k, decomp_b.k
    s_a, s_b = _entropy_or_zero(decomp_a.coefficients), _entropy_or_zero(decomp_b.coefficients)
    n_a, n_b = norm1(decomp_a.coefficients), norm1(decomp_b.coefficients)

    tie = TieBreak.NONE
    if criterion is Criterion.II:
        label = _compare(s_a, s_b, label_a, label_b)
    elif criterion is Criterion.III:
        label = _compare(n_a, n_b, label_a, label_b)
    else:
        label = _compare(k_a, k_b, label_a, label_b)
        if label is None:
            if criterion is Criterion.I_a:
                tie = TieBreak.ENTROPY
                label = _compare(s_a, s_b, label_a, label_b)
            else:
                tie = TieBreak.NORM1
                label = _compare(n_a, n_b, label_a, label_b)

    return Decision(
        label=UNDECIDED if label is None else label,
        k_a=k_a,
        k_b=k_b,
        entropy_a=s_a,
        entropy_b=s_b,
        norm1_a=n_a,
        norm1_b=n_b,
        tie_broken_by=tie,
        tolerance_unmet_a=decomp_a.tolerance_unmet,
        tolerance_unmet_b=decomp_b.tolerance_unmet,
    )


@dataclass(frozen=True)
class ClassifierModel:
    dict_a: Dictionary
    dict_b: Dictionary
    algorithm: Algorithm = Algorithm.MP
    prdn_target: float = 9.0
    criterion: Criterion = Criterion.III
    max_iterations: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm.parse(self.algorithm))
        object.__setattr__(self, "criterion", Criterion.parse(self.criterion))
        if self.dict_a.n_q != self.dict_b.n_q:
            raise ValueError(
                f"dictionaries disagree on beat length: {self.dict_a.n_q} vs {self.dict_b.n_q}"
            )
        if self.label_a == self.label_b:
            raise ValueError("the two dictionaries must carry distinct class labels")

    @property
    def label_a(self) -> str:
        return self.dict_a.label if self.dict_a.label is not None else "A"

    @property
    def label_b(self) -> str:
        return self.dict_b.label if self.dict_b.label is not None else "B"

    @property
    def n_q(self) -> int:
        return self.dict_a.n_q

    def config(self) -> dict:
        return {
            "algorithm": self.algorithm.value,
            "prdn_target": self.prdn_target,
            "criterion": self.criterion.value,
            "max_iterations": self.max_iterations,
            "label_a": self.label_a,
            "label_b": self.label_b,
            "m_a": self.dict_a.m,
            "m_b": self.dict_b.m,
            "n_q": self.n_q,
        }


def classify_beat(f, model: ClassifierModel) -> Decision:
    """Approximate ``f`` to the same prdn with both dictionaries, then decide."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (model.n_q,):
        raise ValueError(f"beat must have length {model.n_q}")
    decomps = [
        approximate_to_prdn(f, d, model.algorithm, model.prdn_target, model.max_iterations)
        for d in (model.dict_a, model.dict_b)
    ]
    return decide(*decomps, model.criterion, model.label_a, model.label_b)


def _classify_chunk(args):
    block, model = args
    return [classify_beat(col, model) for col in block.T]


def classify_batch(beats: np.ndarray, model: ClassifierModel, n_jobs: int = 1) -> list[Decision]:
    beats = np.asarray(beats, dtype=np.float64)
    q = beats.shape[1]
    if n_jobs <= 1 or q < 2:
        return _classify_chunk((beats, model))
    bounds = np.linspace(0, q, min(q, 4 * n_jobs) + 1).astype(int)
    tasks = [(beats[:, lo:hi], model) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    out: list[Decision] = []
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        for chunk in pool.map(_classify_chunk, tasks):
            out.extend(chunk)
    return out


CSV_COLUMNS = [
    "record", "sample_index", "true_label", "predicted_label",
    "k_a", "k_b", "entropy_a", "entropy_b", "norm1_a", "norm1_b", "flags",
]


def write_decisions_csv(path, beats: TrainingSet, decisions: Iterable[Decision]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for i, d in enumerate(decisions):
            writer.writerow([
                beats.records[i], int(beats.samples[i]), beats.labels[i], d.label,
                d.k_a, d.k_b, repr(d.entropy_a), repr(d.entropy_b),
                repr(d.norm1_a), repr(d.norm1_b), d.flags,
            ])


def read_decisions_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("k_a", "k_b", "sample_index"):
            row[key] = int(row[key])
        for key in ("entropy_a", "entropy_b", "norm1_a", "norm1_b"):
            row[key] = float(row[key])
    return rows

