"""Greedy pursuit over redundant dictionaries: MP, OMP and OOMP.

All three algorithms share the :class:`Dictionary` container and return an
:class:`AtomicDecomposition`. Indices are zero-based column positions.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Algorithm",
    "AtomicDecomposition",
    "DegenerateSignalError",
    "Dictionary",
    "InvalidInputError",
    "OompState",
    "PursuitConfig",
    "PursuitError",
    "approximate_batch",
    "approximate_to_prdn",
    "mp",
    "omp",
    "oomp",
    "prdn",
    "pursue",
    "reconstruct",
]

NORM_TOL = 1e-9


class PursuitError(ValueError):
    pass


class DegenerateSignalError(PursuitError):
    def __init__(self, msg: str = "degenerate signal"):
        super().__init__(msg)


class InvalidInputError(PursuitError):
    def __init__(self, msg: str = "invalid input"):
        super().__init__(msg)


class Algorithm(str, enum.Enum):
    MP = "mp"
    OMP = "omp"
    OOMP = "oomp"

    @classmethod
    def parse(cls, value: "Algorithm | str") -> "Algorithm":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown pursuit algorithm {value!r}") from None


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Immutable matrix of unit-norm atoms stored as columns.

    Pass ``normalize=True`` to rescale columns on construction; otherwise
    columns must already be unit norm within ``NORM_TOL``.
    """

    atoms: np.ndarray
    label: str | None = None
    normalize: bool = field(default=False, repr=False)

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=np.float64, copy=True)
        if atoms.ndim != 2 or atoms.shape[0] < 1 or atoms.shape[1] < 1:
            raise InvalidInputError("dictionary must be a non-empty 2-D array")
        if not np.all(np.isfinite(atoms)):
            raise InvalidInputError("dictionary has non-finite entries")
        norms = np.linalg.norm(atoms, axis=0)
        if self.normalize:
            if np.any(norms == 0):
                raise InvalidInputError("cannot normalize a zero atom")
            atoms /= norms
        elif np.any(np.abs(norms - 1.0) > NORM_TOL):
            bad = int(np.argmax(np.abs(norms - 1.0)))
            raise InvalidInputError(f"atom {bad} has norm {norms[bad]!r}, expected 1")
        atoms.setflags(write=False)
        atoms_t = np.ascontiguousarray(atoms.T)
        atoms_t.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "normalize", False)
        object.__setattr__(self, "_atoms_t", atoms_t)
        object.__setattr__(self, "_energies", np.einsum("ij,ij->j", atoms, atoms))

    @property
    def atoms_t(self) -> np.ndarray:
        """Row-major copy of the atoms (one atom per row)."""
        return self._atoms_t

    @property
    def energies(self) -> np.ndarray:
        return self._energies

    @property
    def n_q(self) -> int:
        return self.atoms.shape[0]

    @property
    def m(self) -> int:
        return self.atoms.shape[1]

    @property
    def redundancy(self) -> float:
        return self.m / self.n_q

    def __len__(self) -> int:
        return self.m

    def with_label(self, label: str | None) -> "Dictionary":
        return Dictionary(self.atoms, label=label)


@dataclass(frozen=True)
class PursuitConfig:
    algorithm: Algorithm = Algorithm.OOMP
    rho: float = 0.0
    max_iterations: int | None = None
    denominator_guard: float = 1e-10

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm.parse(self.algorithm))
        if not np.isfinite(self.rho) or self.rho < 0:
            raise ValueError("rho must be a nonnegative finite number")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.denominator_guard > 0:
            raise ValueError("denominator_guard must be positive")

    def iteration_cap(self, n_q: int) -> int:
        limit = 4 * n_q if self.algorithm is Algorithm.MP else n_q
        if self.max_iterations is None:
            return limit
        if self.max_iterations > limit:
            raise ValueError(
                f"max_iterations={self.max_iterations} exceeds {limit} for "
                f"{self.algorithm.value} on signals of length {n_q}"
            )
        return self.max_iterations


@dataclass(frozen=True, eq=False)
class AtomicDecomposition:
    """Result of a pursuit run.

    ``indices`` and ``coefficients`` describe the merged K-term expansion.
    ``path`` is the raw selection order (MP may revisit an atom) and
    ``residual_norms`` holds the residual norm before the first and after
    every iteration.
    """

    indices: np.ndarray
    coefficients: np.ndarray
    residual_norm: float
    approximation: np.ndarray
    iterations: int
    tolerance_met: bool
    algorithm: Algorithm
    path: np.ndarray
    residual_norms: np.ndarray
    step_coefficients: np.ndarray | None = None

    @property
    def k(self) -> int:
        return int(self.indices.size)

    @property
    def tolerance_unmet(self) -> bool:
        return not self.tolerance_met


@dataclass
class OompState:
    """Working state of the orthogonal pursuits after an iteration."""

    indices: list[int]
    w_vectors: np.ndarray
    beta_vectors: np.ndarray
    projections_cache: np.ndarray
    residual: np.ndarray


def _check_signal(f, dictionary: Dictionary) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 1:
        raise InvalidInputError("signal must be one-dimensional")
    if f.shape[0] != dictionary.n_q:
        raise InvalidInputError(
            f"signal length {f.shape[0]} does not match dictionary rows {dictionary.n_q}"
        )
    if not np.all(np.isfinite(f)):
        raise InvalidInputError()
    if not np.any(f):
        raise DegenerateSignalError()
    return f


def _finish(f, dictionary, indices, coefficients, **kwargs) -> AtomicDecomposition:
    indices = np.asarray(indices, dtype=np.intp)
    coefficients = np.asarray(coefficients, dtype=np.float64)
    if indices.size:
        approximation = dictionary.atoms[:, indices] @ coefficients
    else:
        approximation = np.zeros(dictionary.n_q)
    return AtomicDecomposition(
        indices=indices,
        coefficients=coefficients,
        residual_norm=float(np.linalg.norm(f - approximation)),
        approximation=approximation,
        **kwargs,
    )


def mp(f, dictionary: Dictionary, config: PursuitConfig) -> AtomicDecomposition:
    """Matching pursuit.

    Each step picks the atom with the largest absolute correlation with the
    current residual and subtracts its projection. Repeated selections are
    merged into a single coefficient in the output.
    """
    f = _check_signal(f, dictionary)
    DT = dictionary.atoms_t
    cap = config.iteration_cap(dictionary.n_q)
    floor = 1e-15 * math.sqrt(float(f @ f))

    r = f.copy()
    norms = [math.sqrt(float(r @ r))]
    path: list[int] = []
    steps: list[float] = []
    while norms[-1] >= config.rho and len(path) < cap:
        corr = DT @ r
        best = int(np.argmax(np.abs(corr)))
        alpha = float(corr[best])
        if abs(alpha) <= floor:
            # residual orthogonal to every atom: no further progress possible
            break
        r = r - alpha * DT[best]
        path.append(best)
        steps.append(alpha)
        norms.append(math.sqrt(float(r @ r)))

    merged: dict[int, float] = {}
    for idx, alpha in zip(path, steps):
        merged[idx] = merged.get(idx, 0.0) + alpha
    return _finish(
        f,
        dictionary,
        list(merged.keys()),
        list(merged.values()),
        iterations=len(path),
        tolerance_met=norms[-1] < config.rho,
        algorithm=Algorithm.MP,
        path=np.asarray(path, dtype=np.intp),
        residual_norms=np.asarray(norms),
        step_coefficients=np.asarray(steps),
    )


def _orthogonal_pursuit(
    f,
    dictionary: Dictionary,
    config: PursuitConfig,
    optimized: bool,
    observer: Callable[[OompState], None] | None,
) -> AtomicDecomposition:
    f = _check_signal(f, dictionary)
    DT = dictionary.atoms_t
    m, n = DT.shape
    cap = config.iteration_cap(n)
    guard = config.denominator_guard
    self_energy = dictionary.energies

    # row i holds w_i, w_i / ||w_i|| and beta_i respectively
    W = np.zeros((cap, n))
    Wt = np.zeros((cap, n))
    B = np.zeros((cap, n))
    proj = np.zeros(m)  # sum_i <d_n, w~_i>^2
    selected: list[int] = []

    r = f.copy()
    norms = [math.sqrt(float(r @ r))]
    while norms[-1] >= config.rho and len(selected) < cap:
        k = len(selected)
        corr = DT @ r
        denom = self_energy - proj
        admissible = denom >= guard
        if optimized:
            score = np.where(admissible, corr * corr / np.where(admissible, denom, 1.0), -1.0)
        else:
            score = np.where(admissible, corr * corr, -1.0)
        score[selected] = -1.0
        best = int(np.argmax(score))
        if score[best] <= 0.0:
            # no admissible atom left, or residual orthogonal to all of them
            break

        d = DT[best]
        Wk = Wt[:k]
        w = d - Wk.T @ (Wk @ d)
        w -= Wk.T @ (Wk @ w)  # single re-orthogonalisation pass
        w_sq = float(w @ w)
        beta = w / w_sq
        if k:
            B[:k] -= np.multiply.outer(B[:k] @ d, beta)
        W[k] = w
        B[k] = beta
        Wt[k] = w / math.sqrt(w_sq)
        r = r - float(w @ f) * beta
        t = DT @ Wt[k]
        proj += t * t
        selected.append(best)
        norms.append(math.sqrt(float(r @ r)))

        if observer is not None:
            observer(
                OompState(
                    indices=list(selected),
                    w_vectors=W[: k + 1].T.copy(),
                    beta_vectors=B[: k + 1].T.copy(),
                    projections_cache=proj.copy(),
                    residual=r.copy(),
                )
            )

    K = len(selected)
    coefficients = B[:K] @ f
    return _finish(
        f,
        dictionary,
        selected,
        coefficients,
        iterations=K,
        tolerance_met=norms[-1] < config.rho,
        algorithm=Algorithm.OOMP if optimized else Algorithm.OMP,
        path=np.asarray(selected, dtype=np.intp),
        residual_norms=np.asarray(norms),
    )


def omp(f, dictionary: Dictionary, config: PursuitConfig, observer=None) -> AtomicDecomposition:
    """Orthogonal matching pursuit.

    Selection as in MP over the not-yet-selected atoms; the approximation is
    the orthogonal projection of ``f`` onto the span of the selected atoms,
    maintained by Gram-Schmidt with biorthogonal coefficient vectors.
    """
    return _orthogonal_pursuit(f, dictionary, config, optimized=False, observer=observer)


def oomp(f, dictionary: Dictionary, config: PursuitConfig, observer=None) -> AtomicDecomposition:
    """Optimized orthogonal matching pursuit.

    Each new atom maximizes ``<d_n, r>^2 / (1 - sum_i <d_n, w~_i>^2)``, which
    is the choice that minimizes the norm of the next residual given the
    atoms already selected. Candidates whose denominator falls below
    ``config.denominator_guard`` lie (numerically) in the selected span and
    are skipped.
    """
    return _orthogonal_pursuit(f, dictionary, config, optimized=True, observer=observer)


_DISPATCH = {Algorithm.MP: mp, Algorithm.OMP: omp, Algorithm.OOMP: oomp}


def pursue(f, dictionary: Dictionary, config: PursuitConfig) -> AtomicDecomposition:
    return _DISPATCH[config.algorithm](f, dictionary, config)


def reconstruct(decomp: AtomicDecomposition, dictionary: Dictionary) -> np.ndarray:
    idx = np.asarray(decomp.indices, dtype=np.intp)
    if idx.size == 0:
        return np.zeros(dictionary.n_q)
    if idx.min() < 0 or idx.max() >= dictionary.m:
        raise IndexError(f"atom index out of range for dictionary with {dictionary.m} atoms")
    return dictionary.atoms[:, idx] @ np.asarray(decomp.coefficients, dtype=np.float64)


def prdn(f, approx) -> float:
    """Percentage residual norm relative to the signal's deviation from its mean."""
    f = np.asarray(f, dtype=np.float64)
    approx = np.asarray(approx, dtype=np.float64)
    spread = np.linalg.norm(f - f.mean())
    if spread == 0:
        raise DegenerateSignalError("zero-variance signal")
    return float(np.linalg.norm(f - approx) / spread * 100.0)


def prdn_threshold(f, prdn_target: float) -> float:
    f = np.asarray(f, dtype=np.float64)
    spread = np.linalg.norm(f - f.mean())
    if spread == 0:
        raise DegenerateSignalError("zero-variance signal")
    return float(prdn_target) / 100.0 * float(spread)


def approximate_to_prdn(
    f,
    dictionary: Dictionary,
    algorithm: Algorithm | str = Algorithm.OOMP,
    prdn_target: float = 9.0,
    max_iterations: int | None = None,
    denominator_guard: float = 1e-10,
) -> AtomicDecomposition:
    """Approximate ``f`` until its prdn drops below ``prdn_target`` percent."""
    if not prdn_target > 0:
        raise ValueError("prdn_target must be positive")
    config = PursuitConfig(
        algorithm=algorithm,
        rho=prdn_threshold(f, prdn_target),
        max_iterations=max_iterations,
        denominator_guard=denominator_guard,
    )
    return pursue(f, dictionary, config)


def _approximate_chunk(args):
    block, atoms, algorithm, prdn_target, max_iterations = args
    dictionary = Dictionary(atoms)
    out = []
    for col in block.T:
        try:
            out.append(approximate_to_prdn(col, dictionary, algorithm, prdn_target, max_iterations))
        except PursuitError as exc:
            out.append(exc)
    return out


def approximate_batch(
    signals: np.ndarray,
    dictionary: Dictionary,
    algorithm: Algorithm | str = Algorithm.OOMP,
    prdn_target: float = 9.0,
    max_iterations: int | None = None,
    n_jobs: int = 1,
) -> list[AtomicDecomposition | PursuitError]:
    """Run :func:`approximate_to_prdn` over the columns of ``signals``.

    Failures are returned in place as exception instances so callers can
    attach provenance. Output is identical for any ``n_jobs``.
    """
    signals = np.asarray(signals, dtype=np.float64)
    if signals.ndim != 2:
        raise InvalidInputError("signals must be a 2-D array with one signal per column")
    algorithm = Algorithm.parse(algorithm)
    q = signals.shape[1]
    if n_jobs <= 1 or q < 2:
        return _approximate_chunk((signals, dictionary.atoms, algorithm, prdn_target, max_iterations))
    n_chunks = min(q, 4 * n_jobs)
    bounds = np.linspace(0, q, n_chunks + 1).astype(int)
    tasks = [
        (signals[:, lo:hi], np.asarray(dictionary.atoms), algorithm, prdn_target, max_iterations)
        for lo, hi in zip(bounds[:-1], bounds[1:])
        if hi > lo
    ]
    results: list = []
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        for chunk in pool.map(_approximate_chunk, tasks):
            results.extend(chunk)
    return results

