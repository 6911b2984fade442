"""Random test-field corpora: band-limited trigonometric polynomials times
decaying normal profiles, zero at both ends of the normal grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..fields import Grid, SpectralField, TangentialField, tangential_to_spectral, to_spectral
from ..noise import make_rng


@dataclass(frozen=True)
class CorpusSpec:
    """``count`` fields with tangential modes ``|k| <= kmax`` and amplitudes in
    ``[amp_min, amp_max]``; ``radius`` damps mode ``k`` by ``exp(-radius |k|)``."""

    count: int = 100
    kmax: int = 4
    amp_min: float = 0.1
    amp_max: float = 1.0
    radius: float = 0.0
    seed: int = 0
    family: str = "gauss"

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not 0 <= self.amp_min <= self.amp_max:
            raise ValueError("need 0 <= amp_min <= amp_max")
        if self.family not in ("gauss", "exp"):
            raise ValueError("family must be 'gauss' or 'exp'")


def _profile(y: np.ndarray, rng: np.random.Generator, family: str, Ly: float) -> np.ndarray:
    c = rng.uniform(0.5, 1.5)
    p = rng.integers(1, 3)
    if family == "gauss":
        # decay below roundoff at Ly so the zeroed last row adds no kink
        c = max(c, 40.0 / Ly**2)
        prof = y**p * np.exp(-c * y**2)
    else:
        prof = y**p * np.exp(-c * 2.0 * y)
    prof = prof / np.max(np.abs(prof))
    prof[0] = 0.0
    prof[-1] = 0.0
    return prof


def random_field(grid: Grid, rng: np.random.Generator, kmax: int = 4, amplitude: float = 1.0,
                 radius: float = 0.0, family: str = "gauss") -> SpectralField:
    """One real field with modes ``|n| <= kmax`` in every tangential direction."""
    vals = np.zeros(grid.shape)
    coords = np.meshgrid(*([grid.x] * (grid.d - 1)), indexing="ij")
    scale = 2.0 * np.pi / grid.Lx
    for c in range(grid.ncomp):
        for nvec in np.ndindex(*([2 * kmax + 1] * (grid.d - 1))):
            n = np.array(nvec) - kmax
            if np.any(n < 0) and not _first_positive(n):
                continue
            phase = scale * sum(ni * xi for ni, xi in zip(n, coords))
            kk = scale * float(np.sqrt(np.sum(n**2)))
            a, b = rng.standard_normal(2) * np.exp(-radius * kk)
            prof = _profile(grid.y, rng, family, grid.Ly)
            tang = a * np.cos(phase) + (b * np.sin(phase) if np.any(n) else 0.0)
            vals[c] += tang[..., None] * prof
    m = np.max(np.abs(vals))
    if m > 0:
        vals *= amplitude / m
    return to_spectral(vals, grid)


def _first_positive(n: np.ndarray) -> bool:
    nz = n[n != 0]
    return nz.size > 0 and nz[0] > 0


def random_tangential(grid: Grid, rng: np.random.Generator, kmax: int = 4,
                      amplitude: float = 1.0, radius: float = 0.0) -> TangentialField:
    coords = np.meshgrid(*([grid.x] * (grid.d - 1)), indexing="ij")
    scale = 2.0 * np.pi / grid.Lx
    vals = np.zeros(grid.tangential_shape)
    for c in range(grid.ncomp):
        for nvec in np.ndindex(*([kmax + 1] * (grid.d - 1))):
            phase = scale * sum(ni * xi for ni, xi in zip(nvec, coords))
            kk = scale * float(np.sqrt(np.sum(np.square(nvec))))
            a, b = rng.standard_normal(2) * np.exp(-radius * kk)
            vals[c] += a * np.cos(phase) + b * np.sin(phase)
    m = np.max(np.abs(vals))
    if m > 0:
        vals *= amplitude / m
    return tangential_to_spectral(vals, grid)


def generate_corpus(grid: Grid, spec: CorpusSpec) -> list[SpectralField]:
    """Fields keyed by ``(seed, index)`` so any member can be regenerated alone."""
    out = []
    for i in range(spec.count):
        rng = make_rng(spec.seed, i)
        amp = rng.uniform(spec.amp_min, spec.amp_max)
        out.append(random_field(grid, rng, spec.kmax, amp, spec.radius, spec.family))
    return out


def generate_pairs(grid: Grid, spec: CorpusSpec) -> list[tuple[SpectralField, SpectralField]]:
    first = generate_corpus(grid, spec)
    second = generate_corpus(grid, CorpusSpec(spec.count, spec.kmax, spec.amp_min, spec.amp_max,
                                              spec.radius, spec.seed + 7919, spec.family))
    return list(zip(first, second))
