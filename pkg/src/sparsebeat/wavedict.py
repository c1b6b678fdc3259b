"""Redundant wavelet dictionaries built from translated CDF 9/7 prototypes.

The synthesis scaling function is obtained by cascade iteration of the 7-tap
low-pass filter on a dyadic grid; the wavelet follows from the two-scale
relation with the 9-tap high-pass filter. Atoms are the prototypes dilated by
``2**j`` and shifted by multiples of ``b`` on the unit interval, sampled at
``signal_length`` points and renormalized after truncation to the window.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from sparsebeat.pursuit import Dictionary

SAMPLES_PER_UNIT = 2**7
MIN_ATOM_NORM = 1e-6


class WaveletFamily(str, enum.Enum):
    CDF97 = "cdf97"


class CascadeError(RuntimeError):
    pass


def _y_root_to_z(root: complex) -> np.ndarray:
    # y = (2 - z - 1/z) / 4, so z * 4 (y - root) = -(z^2 + (4 root - 2) z + 1)
    return np.array([1.0, 4.0 * root - 2.0, 1.0])


@lru_cache(maxsize=None)
def cdf97_filters() -> tuple[np.ndarray, np.ndarray]:
    """Return (synthesis low-pass, analysis low-pass) taps, each summing to sqrt(2).

    Obtained by splitting the roots of the degree-3 Daubechies polynomial
    ``1 + 4y + 10y^2 + 20y^3``: the real root goes to the 7-tap filter and the
    complex pair to the 9-tap filter, each multiplied by ``(1 + z)^4``.
    """
    roots = np.roots([20.0, 10.0, 4.0, 1.0])
    real = roots[np.abs(roots.imag) < 1e-12].real
    pair = roots[np.abs(roots.imag) >= 1e-12]
    binom = np.array([1.0, 4.0, 6.0, 4.0, 1.0])
    synthesis = np.convolve(binom, _y_root_to_z(real[0]))
    analysis = binom.astype(complex)
    for root in pair:
        analysis = np.convolve(analysis, _y_root_to_z(root))
    analysis = analysis.real
    synthesis = synthesis * np.sqrt(2.0) / synthesis.sum()
    analysis = analysis * np.sqrt(2.0) / analysis.sum()
    return synthesis, analysis


@dataclass(frozen=True)
class Prototype:
    """A function sampled on ``x = start + i / samples_per_unit``."""

    start: float
    samples_per_unit: int
    values: np.ndarray = field(repr=False)

    @property
    def stop(self) -> float:
        return self.start + (self.values.size - 1) / self.samples_per_unit

    @property
    def x(self) -> np.ndarray:
        return self.start + np.arange(self.values.size) / self.samples_per_unit

    def __call__(self, t) -> np.ndarray:
        return np.interp(t, self.x, self.values, left=0.0, right=0.0)


def _cascade(taps: np.ndarray, offset: int, spu: int, tol: float, max_iter: int) -> Prototype:
    """Fixed-point iteration of phi(x) = sqrt(2) sum_k h_k phi(2x - k) on a dyadic grid."""
    lo, hi = offset, offset + taps.size - 1
    x = np.arange(lo * spu, hi * spu + 1) / spu
    centre, half = (lo + hi) / 2, (hi - lo) / 2
    phi = np.maximum(0.0, 1.0 - np.abs(x - centre) / half)
    phi /= phi.sum() / spu

    # 2x - k lands on the same grid; precompute the gather for every tap
    gathers = []
    for k, h in enumerate(taps):
        t = 2 * x - (k + offset)
        inside = (t >= lo) & (t <= hi)
        idx = np.rint((t[inside] - lo) * spu).astype(int)
        gathers.append((np.sqrt(2.0) * h, inside, idx))

    for _ in range(max_iter):
        new = np.zeros_like(phi)
        for weight, inside, idx in gathers:
            new[inside] += weight * phi[idx]
        diff = np.max(np.abs(new - phi))
        phi = new
        if diff < tol:
            return Prototype(float(lo), spu, phi)
    raise CascadeError(f"cascade did not converge after {max_iter} iterations (last diff {diff:.3g})")


@lru_cache(maxsize=None)
def _prototypes(family: WaveletFamily, spu: int) -> tuple[Prototype, Prototype]:
    if family is not WaveletFamily.CDF97:
        raise ValueError(f"unsupported wavelet family {family!r}")
    synthesis, analysis = cdf97_filters()
    phi = _cascade(synthesis, offset=-3, spu=spu, tol=1e-6, max_iter=500)

    # synthesis high-pass g_k = (-1)^k h~_{1-k}, analysis taps centred on 0
    g = {k: (-1) ** k * analysis[(1 - k) + 4] for k in range(-3, 6)}
    lo = (phi.start + min(g)) / 2
    hi = (phi.stop + max(g)) / 2
    x = np.arange(round(lo * spu), round(hi * spu) + 1) / spu
    psi = np.zeros_like(x)
    for k, gk in g.items():
        psi += np.sqrt(2.0) * gk * phi(2 * x - k)
    return phi, Prototype(float(x[0]), spu, psi)


def prototype_waveforms(
    family: WaveletFamily | str = WaveletFamily.CDF97,
    samples_per_unit: int = SAMPLES_PER_UNIT,
) -> tuple[Prototype, Prototype]:
    """Return the (scaling, wavelet) prototypes sampled at ``samples_per_unit``."""
    return _prototypes(WaveletFamily(family), int(samples_per_unit))


@dataclass(frozen=True)
class WaveletDictConfig:
    signal_length: int = 256
    family: WaveletFamily = WaveletFamily.CDF97
    b: float = 0.25
    j0: int = 2
    j_max: int = 6
    # first wavelet scale; None means j0 + 1
    wavelet_j_min: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", WaveletFamily(self.family))
        if not self.b > 0:
            raise ValueError("translation step b must be positive")
        if self.j0 > self.j_max:
            raise ValueError("j0 must not exceed j_max")
        if self.wavelet_j_min is not None and not self.j0 <= self.wavelet_j_min <= self.j_max:
            raise ValueError("wavelet_j_min must lie in [j0, j_max]")
        if self.signal_length < 2:
            raise ValueError("signal_length must be at least 2")


def _translated(proto: Prototype, grid: np.ndarray, j: int, b: float) -> list[np.ndarray]:
    scale = 2.0**j
    # support of proto(2^j x - b k) meets [0, 1) iff -stop < b k < 2^j - start
    k_lo = int(np.floor(-proto.stop / b))
    k_hi = int(np.ceil((scale - proto.start) / b))
    atoms = []
    for k in range(k_lo, k_hi + 1):
        atom = proto(scale * grid - b * k)
        norm = np.linalg.norm(atom)
        if norm < MIN_ATOM_NORM:
            continue
        atoms.append(atom / norm)
    return atoms


def build_wavelet_dictionary(config: WaveletDictConfig | None = None) -> Dictionary:
    """Scaling atoms at ``j0`` plus wavelet atoms up to ``j_max``.

    Atoms overhanging the window are truncated and renormalized; atoms
    with less than ``MIN_ATOM_NORM`` energy inside the window are dropped.
    """
    config = config or WaveletDictConfig()
    phi, psi = prototype_waveforms(config.family)
    grid = np.arange(config.signal_length) / config.signal_length
    atoms = _translated(phi, grid, config.j0, config.b)
    j_first = config.j0 + 1 if config.wavelet_j_min is None else config.wavelet_j_min
    for j in range(j_first, config.j_max + 1):
        atoms.extend(_translated(psi, grid, j, config.b))
    return Dictionary(np.column_stack(atoms), label="screening")
