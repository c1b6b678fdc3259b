"""Train/test splits, confusion statistics and multi-seed experiments."""

from __future__ import annotations

import enum
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from sparsebeat.beats import TrainingSet
from sparsebeat.classify import UNDECIDED, ClassifierModel, Criterion, Decision, classify_batch
from sparsebeat.dictlearn import LearnConfig, LearningTrace, learn
from sparsebeat.pursuit import Algorithm
from sparsebeat.screen import ScreeningReport, apply_screening, screen_training_set
from sparsebeat.wavedict import WaveletDictConfig, build_wavelet_dictionary

log = logging.getLogger(__name__)

CLASSES = ("N", "V")
METRICS = ("SE_N", "SE_V", "PP_N", "PP_V", "AC")

TEST2_TRAIN_RECORDS = (
    "101", "106", "108", "112", "114", "115", "118", "119", "122", "124",
    "201", "203", "205", "207", "208", "209", "215", "220", "223", "230",
)
TEST2_TEST_RECORDS = (
    "100", "103", "105", "111", "113", "117", "121", "123", "200", "202", "210",
    "212", "213", "214", "219", "221", "222", "231", "232", "233", "234",
)

# sub-stream codes so that changing one consumer never shifts another's draws
_STREAM_SPLIT, _STREAM_INIT = 1, 2


def substream_seed(seed: int, *path: int) -> int:
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


class SplitMode(str, enum.Enum):
    RANDOM_FRACTION = "random_fraction"
    BY_RECORD = "by_record"


@dataclass(frozen=True)
class SplitSpec:
    mode: SplitMode = SplitMode.RANDOM_FRACTION
    fractions: tuple[tuple[str, float], ...] = (("N", 0.35), ("V", 0.5))
    train_records: tuple[str, ...] = TEST2_TRAIN_RECORDS
    test_records: tuple[str, ...] = TEST2_TEST_RECORDS

    def __post_init__(self):
        object.__setattr__(self, "mode", SplitMode(self.mode))
        if self.mode is SplitMode.RANDOM_FRACTION:
            for label, frac in self.fractions:
                if not 0 < frac < 1:
                    raise ValueError(f"train fraction for {label} must be in (0, 1)")
        else:
            overlap = set(self.train_records) & set(self.test_records)
            if overlap:
                raise ValueError(f"records in both train and test lists: {sorted(overlap)}")

    @classmethod
    def test1(cls) -> "SplitSpec":
        return cls(SplitMode.RANDOM_FRACTION)

    @classmethod
    def test2(cls) -> "SplitSpec":
        return cls(SplitMode.BY_RECORD)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["fractions"] = dict(self.fractions)
        d["train_records"] = list(self.train_records)
        d["test_records"] = list(self.test_records)
        return d


def split_test1(
    beats: TrainingSet, seed: int, fractions=(("N", 0.35), ("V", 0.5))
) -> tuple[TrainingSet, TrainingSet]:
    """Per-class uniform split; ``floor(fraction * count)`` beats go to train."""
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for label, frac in fractions:
        idx = np.flatnonzero(beats.labels == label)
        if idx.size == 0:
            raise ValueError(f"class {label} absent from the beat set")
        perm = rng.permutation(idx)
        n_train = math.floor(frac * idx.size)
        train_idx.append(np.sort(perm[:n_train]))
        test_idx.append(np.sort(perm[n_train:]))
    return beats.subset(np.concatenate(train_idx)), beats.subset(np.concatenate(test_idx))


def split_test2(
    beats: TrainingSet,
    train_records=TEST2_TRAIN_RECORDS,
    test_records=TEST2_TEST_RECORDS,
) -> tuple[TrainingSet, TrainingSet]:
    records = np.asarray(beats.records).astype(str)
    in_train = np.isin(records, list(train_records))
    in_test = np.isin(records, list(test_records))
    excluded = ~(in_train | in_test)
    if excluded.any():
        warnings.warn(
            f"{int(excluded.sum())} beats from records outside both lists excluded "
            f"({', '.join(sorted(set(records[excluded])))})",
            stacklevel=2,
        )
    train, test = beats.subset(np.flatnonzero(in_train)), beats.subset(np.flatnonzero(in_test))
    if train.size == 0 or test.size == 0:
        raise ValueError("record split leaves the train or test side empty")
    return train, test


def split(beats: TrainingSet, spec: SplitSpec, seed: int) -> tuple[TrainingSet, TrainingSet]:
    if spec.mode is SplitMode.RANDOM_FRACTION:
        return split_test1(beats, seed, spec.fractions)
    return split_test2(beats, spec.train_records, spec.test_records)


@dataclass(frozen=True)
class ConfusionStats:
    tp: dict[str, int]
    fp: dict[str, int]
    fn: dict[str, int]
    undecided: dict[str, int]
    total: int
    correct: int

    def se(self, label: str) -> Fraction:
        d = self.tp[label] + self.fn[label]
        return Fraction(self.tp[label], d) if d else Fraction(0)

    def pp(self, label: str) -> Fraction:
        d = self.tp[label] + self.fp[label]
        return Fraction(self.tp[label], d) if d else Fraction(0)

    @property
    def ac(self) -> Fraction:
        return Fraction(self.correct, self.total)

    def metrics(self) -> dict[str, Fraction]:
        a, b = CLASSES
        return {
            f"SE_{a}": self.se(a), f"SE_{b}": self.se(b),
            f"PP_{a}": self.pp(a), f"PP_{b}": self.pp(b),
            "AC": self.ac,
        }

    def percentages(self) -> dict[str, float]:
        return {k: float(100 * v) for k, v in self.metrics().items()}

    def to_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "undecided": self.undecided,
            "total": self.total, "correct": self.correct,
            "metrics_percent": self.percentages(),
        }


def compute_stats(true_labels, predicted_labels) -> ConfusionStats:
    """Binary N/V statistics. An undecided beat is a false negative for its true class only."""
    true_labels, predicted_labels = list(true_labels), list(predicted_labels)
    if not true_labels:
        raise ValueError("no decisions to score")
    if len(true_labels) != len(predicted_labels):
        raise ValueError("label and prediction counts differ")
    tp = dict.fromkeys(CLASSES, 0)
    fp = dict.fromkeys(CLASSES, 0)
    fn = dict.fromkeys(CLASSES, 0)
    und = dict.fromkeys(CLASSES, 0)
    correct = 0
    for t, p in zip(true_labels, predicted_labels):
        if t not in CLASSES:
            raise ValueError(f"true label {t!r} is not one of {CLASSES}")
        if p == t:
            tp[t] += 1
            correct += 1
            continue
        fn[t] += 1
        if p == UNDECIDED:
            und[t] += 1
        elif p in CLASSES:
            fp[p] += 1
        else:
            raise ValueError(f"predicted label {p!r} is not one of {CLASSES} or {UNDECIDED!r}")
    return ConfusionStats(tp, fp, fn, und, len(true_labels), correct)


@dataclass(frozen=True)
class ScreeningSettings:
    enabled: bool = True
    prdn_target: float = 9.0
    # the smaller V class gets the narrower window
    std_multiplier_n: float = 3.0
    std_multiplier_v: float = 2.0
    algorithm: Algorithm = Algorithm.OOMP
    b: float = 0.25
    j0: int = 2
    j_max: int = 6
    wavelet_j_min: int | None = None

    def multiplier(self, label: str) -> float:
        return self.std_multiplier_v if label == "V" else self.std_multiplier_n

    def to_dict(self) -> dict:
        d = asdict(self)
        d["algorithm"] = Algorithm.parse(self.algorithm).value
        return d


@dataclass(frozen=True)
class ExperimentConfig:
    split: SplitSpec = field(default_factory=SplitSpec.test1)
    learn_n: LearnConfig = field(default_factory=LearnConfig)
    learn_v: LearnConfig = field(default_factory=LearnConfig)
    algorithm: Algorithm = Algorithm.MP
    prdn_target: float = 9.0
    criterion: Criterion = Criterion.III
    screening: ScreeningSettings = field(default_factory=ScreeningSettings)

    def to_dict(self) -> dict:
        return {
            "split": self.split.to_dict(),
            "learn_n": self.learn_n.to_dict(),
            "learn_v": self.learn_v.to_dict(),
            "algorithm": Algorithm.parse(self.algorithm).value,
            "prdn_target": self.prdn_target,
            "criterion": Criterion.parse(self.criterion).value,
            "screening": self.screening.to_dict(),
        }


@dataclass
class SeedResult:
    seed: int
    stats: ConfusionStats
    screening: dict[str, ScreeningReport | None]
    traces: dict[str, LearningTrace]
    n_train: dict[str, int]
    n_test: dict[str, int]
    decisions: list[Decision] | None = None

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "stats": self.stats.to_dict(),
            "screening": {
                k: (None if r is None else {
                    "mean_k": r.mean_k, "std_k": r.std_k, "window": list(r.window),
                    "rejected": int(r.rejected.size), "rejection_fraction": r.rejection_fraction,
                })
                for k, r in self.screening.items()
            },
            "learn_trace": {k: t.to_dict() for k, t in self.traces.items()},
            "n_train": self.n_train,
            "n_test": self.n_test,
        }


@dataclass
class ExperimentReport:
    config: dict
    seeds: list[SeedResult]

    def _values(self, metric: str) -> np.ndarray:
        return np.array([r.stats.percentages()[metric] for r in self.seeds])

    def mean(self) -> dict[str, float]:
        return {m: float(self._values(m).mean()) for m in METRICS}

    def std(self) -> dict[str, float] | None:
        """Sample standard deviation across seeds; ``None`` with fewer than two seeds."""
        if len(self.seeds) < 2:
            return None
        return {m: float(self._values(m).std(ddof=1)) for m in METRICS}

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "mean_percent": self.mean(),
            "std_percent": self.std(),
            "seeds": [r.to_dict() for r in self.seeds],
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def format_table(self) -> str:
        mean, std = self.mean(), self.std()
        head = f"{Criterion.parse(self.config['criterion']).value} / {self.config['algorithm'].upper()}"
        lines = [f"{'':8s}{head:>14s}", "-" * 22]
        for m in METRICS:
            lines.append(f"{m:8s}{mean[m]:14.2f}")
            if std is not None:
                lines.append(f"{'  std':8s}{std[m]:14.2f}")
        lines.append(f"({len(self.seeds)} seed{'s' if len(self.seeds) != 1 else ''})")
        return "\n".join(lines)


def _screen(train: TrainingSet, label: str, settings: ScreeningSettings, n_jobs: int):
    if not settings.enabled:
        return train, None
    wdict = build_wavelet_dictionary(
        WaveletDictConfig(
            signal_length=train.n_q, b=settings.b, j0=settings.j0, j_max=settings.j_max,
            wavelet_j_min=settings.wavelet_j_min,
        )
    )
    report = screen_training_set(
        train, wdict, settings.prdn_target, settings.multiplier(label), settings.algorithm,
        n_jobs=n_jobs,
    )
    return apply_screening(train, report), report


def run_seed(beats: TrainingSet, config: ExperimentConfig, seed: int, n_jobs: int = 1,
             keep_decisions: bool = False) -> SeedResult:
    train, test = split(beats, config.split, substream_seed(seed, _STREAM_SPLIT))
    dicts, traces, reports, n_train = [], {}, {}, {}
    for c, (label, lcfg) in enumerate(zip(CLASSES, (config.learn_n, config.learn_v))):
        part = train.of_class(label)
        if part.size == 0:
            raise ValueError(f"seed {seed}: no training beats of class {label}")
        part, reports[label] = _screen(part, label, config.screening, n_jobs)
        n_train[label] = part.size
        lcfg = LearnConfig(**{**lcfg.to_dict(), "seed": substream_seed(seed, _STREAM_INIT, c)})
        try:
            d, traces[label] = learn(part, lcfg, n_jobs=n_jobs)
        except Exception as exc:
            raise RuntimeError(f"seed {seed}, class {label}: {exc}") from exc
        dicts.append(d.with_label(label))
    model = ClassifierModel(
        dicts[0], dicts[1], config.algorithm, config.prdn_target, config.criterion
    )
    test = test.subset(np.flatnonzero(np.isin(test.labels, CLASSES)))
    decisions = classify_batch(test.beats, model, n_jobs=n_jobs)
    stats = compute_stats(test.labels, [d.label for d in decisions])
    return SeedResult(
        seed=seed,
        stats=stats,
        screening=reports,
        traces=traces,
        n_train=n_train,
        n_test={label: int(np.sum(test.labels == label)) for label in CLASSES},
        decisions=decisions if keep_decisions else None,
    )


def run_experiment(
    beats: TrainingSet,
    config: ExperimentConfig,
    seeds=(0, 1, 2, 3, 4),
    n_jobs: int = 1,
) -> ExperimentReport:
    """Split, screen the training beats of each class, learn both dictionaries, classify, score.

    Seeds run one after another; ``n_jobs`` parallelizes the per-beat work
    inside each seed and never changes the result.
    """
    results = []
    for seed in seeds:
        log.info("seed %d", seed)
        results.append(run_seed(beats, config, int(seed), n_jobs))
    return ExperimentReport(config={**config.to_dict(), "seeds": [int(s) for s in seeds]}, seeds=results)
