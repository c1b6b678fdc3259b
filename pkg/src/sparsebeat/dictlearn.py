"""Class-specific dictionary learning.

Alternates greedy sparse coding of every training beat with the closed-form
least-squares dictionary update ``D = F C^T (C C^T)^{-1}``. Atoms never
selected during coding are pruned before the update so that ``C C^T`` stays
invertible; columns are renormalized afterwards.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from sparsebeat.beats import TrainingSet
from sparsebeat.pursuit import Algorithm, Dictionary, PursuitError, approximate_batch

log = logging.getLogger(__name__)

MAX_CONDITION = 1e12

__all__ = [
    "BeatError",
    "CoefficientMatrix",
    "LearnConfig",
    "LearningTrace",
    "RankDeficientError",
    "TrainingSet",
    "approximation_product",
    "init_dictionary",
    "learn",
    "prune_unused",
    "solve_dictionary",
    "sparse_code_step",
    "update_dictionary",
]


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, msg: str = "rank-deficient coefficients"):
        super().__init__(msg)


class BeatError(PursuitError):
    """A pursuit failure tagged with the offending beat's provenance."""

    def __init__(self, record: str, sample: int, cause: Exception):
        super().__init__(f"beat at record {record}, sample {sample}: {cause}")
        self.record = record
        self.sample = sample
        self.cause = cause


@dataclass(frozen=True)
class LearnConfig:
    m: int = 512
    algorithm: Algorithm = Algorithm.MP
    prdn_target: float = 9.0
    max_outer_iterations: int = 20
    tol: float = 1e-3
    seed: int = 0
    max_iterations: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm.parse(self.algorithm))
        if self.m < 1:
            raise ValueError("m must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be positive")
        if not self.prdn_target > 0:
            raise ValueError("prdn_target must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["algorithm"] = self.algorithm.value
        return d


@dataclass(eq=False)
class CoefficientMatrix:
    """Sparse ``M x Q`` coefficient matrix plus per-beat coding diagnostics.

    Column ``q`` stores exactly the atoms selected for beat ``q`` (explicit
    entries even if a coefficient happens to be zero), with row indices
    sorted ascending.
    """

    matrix: scipy.sparse.csc_array
    residual_norms: np.ndarray
    tolerance_met: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def k_per_column(self) -> np.ndarray:
        return np.diff(self.matrix.indptr)

    def row_usage(self) -> np.ndarray:
        return np.bincount(self.matrix.indices, minlength=self.matrix.shape[0])

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass
class LearningTrace:
    mean_k: list[float] = field(default_factory=list)
    approximation_error: list[float] = field(default_factory=list)
    dictionary_change: list[float] = field(default_factory=list)
    pruned: list[int] = field(default_factory=list)
    converged: bool = False
    diagnostic: str | None = None

    def __len__(self) -> int:
        return len(self.mean_k)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LearningTrace":
        return cls(**d)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def init_dictionary(training: TrainingSet, m: int, seed=0) -> Dictionary:
    """Draw ``m`` distinct training beats uniformly at random as unit-norm atoms.

    Zero-norm beats are passed over and the next draw is used instead.
    """
    if training.size < m:
        raise ValueError(f"need at least {m} beats to initialise, got {training.size}")
    order = _as_rng(seed).permutation(training.size)
    norms = np.linalg.norm(training.beats, axis=0)
    chosen = [i for i in order if norms[i] > 0][:m]
    if len(chosen) < m:
        raise ValueError(f"only {len(chosen)} non-zero beats available for {m} atoms")
    return Dictionary(training.beats[:, chosen], normalize=True)


def sparse_code_step(
    training: TrainingSet,
    dictionary: Dictionary,
    algorithm: Algorithm | str = Algorithm.MP,
    prdn_target: float = 9.0,
    max_iterations: int | None = None,
    n_jobs: int = 1,
) -> CoefficientMatrix:
    results = approximate_batch(
        training.beats, dictionary, algorithm, prdn_target, max_iterations, n_jobs=n_jobs
    )
    q = training.size
    indptr = np.zeros(q + 1, dtype=np.int64)
    rows, vals = [], []
    residuals = np.empty(q)
    met = np.empty(q, dtype=bool)
    for i, res in enumerate(results):
        if isinstance(res, Exception):
            raise BeatError(*training.provenance(i), res)
        order = np.argsort(res.indices, kind="stable")
        rows.append(res.indices[order])
        vals.append(res.coefficients[order])
        indptr[i + 1] = indptr[i] + res.k
        residuals[i] = res.residual_norm
        met[i] = res.tolerance_met
    indices = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    data = np.concatenate(vals) if vals else np.zeros(0)
    matrix = scipy.sparse.csc_array((data, indices, indptr), shape=(dictionary.m, q))
    return CoefficientMatrix(matrix, residuals, met)


def approximation_product(atoms: np.ndarray, coeffs: CoefficientMatrix) -> np.ndarray:
    """``D @ C`` computed column by column over the stored entries of ``C``."""
    return np.asarray(coeffs.matrix.T @ np.asarray(atoms).T).T


def solve_dictionary(F: np.ndarray, coeffs: CoefficientMatrix) -> np.ndarray:
    """Unnormalized least-squares minimizer of ``||F - D C||_F`` over ``D``."""
    C = coeffs.matrix
    gram = np.asarray((C @ C.T).toarray())
    cond = np.linalg.cond(gram) if gram.size else np.inf
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise RankDeficientError(f"rank-deficient coefficients (condition {cond:.3g})")
    rhs = np.asarray(C @ np.asarray(F, dtype=np.float64).T)  # C F^T = (F C^T)^T
    factor = scipy.linalg.cho_factor(gram)
    return scipy.linalg.cho_solve(factor, rhs).T


def update_dictionary(F: np.ndarray, coeffs: CoefficientMatrix, label: str | None = None) -> Dictionary:
    D = solve_dictionary(F, coeffs)
    norms = np.linalg.norm(D, axis=0)
    if np.any(norms < 1e-12):
        raise RankDeficientError("rank-deficient coefficients (vanishing atom after update)")
    return Dictionary(D / norms, label=label)


def prune_unused(
    dictionary: Dictionary, coeffs: CoefficientMatrix
) -> tuple[Dictionary, CoefficientMatrix, list[int]]:
    """Drop atoms that no beat selected, together with their (empty) rows of ``C``."""
    used = coeffs.row_usage() > 0
    if not used.any():
        raise ValueError("no atom was used; cannot prune to an empty dictionary")
    removed = np.flatnonzero(~used).tolist()
    if not removed:
        return dictionary, coeffs, []
    remap = np.cumsum(used) - 1
    C = coeffs.matrix
    matrix = scipy.sparse.csc_array(
        (C.data.copy(), remap[C.indices], C.indptr.copy()), shape=(int(used.sum()), C.shape[1])
    )
    pruned = Dictionary(dictionary.atoms[:, used], label=dictionary.label)
    return pruned, CoefficientMatrix(matrix, coeffs.residual_norms, coeffs.tolerance_met), removed


def learn(
    training: TrainingSet,
    config: LearnConfig,
    initial: Dictionary | None = None,
    n_jobs: int = 1,
) -> tuple[Dictionary, LearningTrace]:
    training.check_trainable(config.m)
    label = str(training.labels[0]) if training.size else None
    D = initial if initial is not None else init_dictionary(training, config.m, config.seed)
    D = D.with_label(label)
    F = training.beats
    tol = config.tol * float(np.linalg.norm(D.atoms))
    trace = LearningTrace()

    for it in range(1, config.max_outer_iterations + 1):
        C = sparse_code_step(
            training, D, config.algorithm, config.prdn_target, config.max_iterations, n_jobs
        )
        D_kept, C_kept, removed = prune_unused(D, C)
        try:
            D_new = update_dictionary(F, C_kept, label=label)
        except RankDeficientError as exc:
            trace.diagnostic = f"iteration {it}: {exc}; returning last valid dictionary"
            log.warning(trace.diagnostic)
            return D, trace
        change = float(np.linalg.norm(D_new.atoms - D_kept.atoms))
        trace.mean_k.append(float(C.k_per_column.mean()))
        trace.approximation_error.append(float(np.sqrt(np.sum(C.residual_norms**2))))
        trace.dictionary_change.append(change)
        trace.pruned.append(len(removed))
        log.debug(
            "iter %d: mean K %.3f, error %.4g, change %.4g, pruned %d",
            it, trace.mean_k[-1], trace.approximation_error[-1], change, len(removed),
        )
        D = D_new
        if change < tol:
            trace.converged = True
            break
    return D, trace

