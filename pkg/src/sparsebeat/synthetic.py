"""Synthetic sparse signals drawn from hidden dictionaries, for tests and demos."""

from __future__ import annotations

import numpy as np

from sparsebeat.beats import TrainingSet, concatenate


def random_dictionary(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    atoms = rng.standard_normal((n, m))
    return atoms / np.linalg.norm(atoms, axis=0)


def sparse_combinations(
    atoms: np.ndarray, q: int, k: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """``q`` signals, each a combination of ``k`` distinct atoms.

    Coefficient magnitudes are uniform on [1, 2] with random sign so that no
    selected atom is negligible. Returns (signals, support indices).
    """
    n, m = atoms.shape
    support = np.stack([rng.choice(m, size=k, replace=False) for _ in range(q)])
    coeffs = rng.uniform(1.0, 2.0, size=(q, k)) * rng.choice([-1.0, 1.0], size=(q, k))
    signals = np.einsum("nqk,qk->nq", atoms[:, support], coeffs)
    return signals, support


def add_noise(signals: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Add white Gaussian noise at the given per-signal SNR (in dB)."""
    power = np.mean(signals**2, axis=0)
    sigma = np.sqrt(power / 10 ** (snr_db / 10))
    return signals + rng.standard_normal(signals.shape) * sigma


def two_class_beats(
    n_q: int = 64,
    m_hidden: int = 48,
    k: int = 4,
    q_per_class: int = 1000,
    snr_db: float = 20.0,
    seed: int = 0,
    labels: tuple[str, str] = ("N", "V"),
    records: tuple[str, str] | None = None,
) -> tuple[TrainingSet, tuple[np.ndarray, np.ndarray]]:
    """Two labelled classes generated from independent hidden dictionaries.

    Returns the beats and the pair of hidden dictionaries.
    """
    rng = np.random.default_rng(seed)
    hidden = (random_dictionary(n_q, m_hidden, rng), random_dictionary(n_q, m_hidden, rng))
    sets = []
    for c, (label, atoms) in enumerate(zip(labels, hidden)):
        clean, _ = sparse_combinations(atoms, q_per_class, k, rng)
        record = records[c] if records else f"syn{label}"
        sets.append(
            TrainingSet(
                add_noise(clean, snr_db, rng),
                np.full(q_per_class, label),
                np.full(q_per_class, record),
                np.arange(q_per_class) * 400 + 200,
            )
        )
    return concatenate(sets), hidden
