"""Wave-mode lattice, noise spectra and summability checks.

Modes live on ``k = 2 pi z`` with ``z`` a non-zero integer pair. Only the
half lattice ``K+ = {z1 > 0} U {z1 = 0, z2 > 0}`` carries independent
coefficients; the other half follows from conjugate symmetry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gamma as gamma_fn

__all__ = [
    "KINDS",
    "WaveMode",
    "SpectrumConfig",
    "ModeSet",
    "mode_set",
    "mode_energy",
    "kolmogorov_exponent",
    "check_regularity",
    "in_half_lattice",
]

KINDS = ("kolmogorov", "power_law", "table")


def kolmogorov_exponent(h: float) -> float:
    """Exponent q in lambda_k ~ |z|^q giving E(|k|) ~ |k|^{-5/3}."""
    return -14.0 / 3.0 + 4.0 * h


def in_half_lattice(z1: int, z2: int) -> bool:
    return z1 > 0 or (z1 == 0 and z2 > 0)


@dataclass(frozen=True)
class WaveMode:
    """One lattice mode.

    ``alpha_k`` is the Laplacian eigenvalue ``|k|^2 = 4 pi^2 |z|^2``.
    """

    z: tuple[int, int]
    lambda_k: float

    def __post_init__(self):
        if self.z == (0, 0):
            raise ValueError("the zero mode is excluded")

    @property
    def k(self) -> tuple[float, float]:
        return (2 * math.pi * self.z[0], 2 * math.pi * self.z[1])

    @property
    def norm2(self) -> int:
        return self.z[0] ** 2 + self.z[1] ** 2

    @property
    def alpha_k(self) -> float:
        return 4 * math.pi ** 2 * self.norm2

    @property
    def k_norm(self) -> float:
        return 2 * math.pi * math.sqrt(self.norm2)

    @property
    def positive(self) -> bool:
        return in_half_lattice(*self.z)


@dataclass(frozen=True)
class SpectrumConfig:
    """Noise spectrum lambda_k as a function of |z|.

    Parameters
    ----------
    kind : {"kolmogorov", "power_law", "table"}
    c0 : float
        Overall amplitude.
    cutoff_R : int
        Modes with ``|z| > R`` carry no noise and are not enumerated.
    h : float
        Hurst parameter; fixes the Kolmogorov exponent ``-14/3 + 4H``.
    p : float, optional
        Decay exponent for ``power_law``: ``lambda = c0 |z|^-p``.
    table : sequence of (|z|^2, weight), optional
        Explicit weights for ``table``; missing shells get zero.
    """

    kind: str = "kolmogorov"
    c0: float = 1.0
    cutoff_R: int = 2
    h: float = 1.0 / 3.0
    p: float | None = None
    table: tuple[tuple[int, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown spectrum kind {self.kind!r}; expected one of {KINDS}")
        if not self.c0 > 0:
            raise ValueError(f"c0 must be positive, got {self.c0}")
        if int(self.cutoff_R) != self.cutoff_R or self.cutoff_R < 1:
            raise ValueError(f"cutoff_R must be a positive integer, got {self.cutoff_R}")
        if not 0 < self.h < 1:
            raise ValueError(f"h must lie in (0, 1), got {self.h}")
        if self.kind == "power_law" and self.p is None:
            raise ValueError("power_law spectrum needs an exponent p")
        table = tuple((int(n2), float(w)) for n2, w in self.table)
        if any(w < 0 for _, w in table):
            raise ValueError("table weights must be non-negative")
        object.__setattr__(self, "table", table)

    def weight(self, norm2: int) -> float:
        """lambda for a mode with ``|z|^2 = norm2``; zero beyond the cutoff."""
        if norm2 <= 0 or norm2 > self.cutoff_R ** 2:
            return 0.0
        if self.kind == "table":
            return self.c0 * dict(self.table).get(int(norm2), 0.0)
        q = kolmogorov_exponent(self.h) if self.kind == "kolmogorov" else -self.p
        # Exponent applied to |z|^2 so equal shells give bitwise equal weights.
        return self.c0 * float(norm2) ** (q / 2.0)


@dataclass(frozen=True)
class ModeSet:
    """Lexicographically ordered modes with ``0 < |z| <= R`` and the K+ mask."""

    modes: tuple[WaveMode, ...]

    def __len__(self) -> int:
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    @property
    def positive(self) -> tuple[WaveMode, ...]:
        return tuple(m for m in self.modes if m.positive)

    def half_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """K+ lattice indices (n, 2) and their weights (n,)."""
        pos = self.positive
        z = np.array([m.z for m in pos], dtype=np.int64).reshape(-1, 2)
        lam = np.array([m.lambda_k for m in pos], dtype=float)
        return z, lam


def mode_set(config: SpectrumConfig) -> ModeSet:
    r = int(config.cutoff_R)
    modes = []
    for z1 in range(-r, r + 1):
        for z2 in range(-r, r + 1):
            n2 = z1 * z1 + z2 * z2
            if 0 < n2 <= r * r:
                modes.append(WaveMode((z1, z2), config.weight(n2)))
    return ModeSet(tuple(modes))


def mode_energy(mode: WaveMode, h: float) -> float:
    """Gamma(2H) H / 2 * lambda_k * |k|^{2-4H}."""
    if mode.lambda_k == 0:
        return 0.0
    return float(gamma_fn(2 * h) * h / 2.0 * mode.lambda_k * mode.k_norm ** (2 - 4 * h))


def check_regularity(p: float, h: float, m: int, gamma: float, tol: float = 1e-9) -> tuple[bool, bool]:
    """Summability of the two lattice series for ``lambda_k = |k|^{-p}``.

    A 2-D lattice sum of ``|k|^q`` converges iff ``q < -2``. The exponent
    comparison is done with a small tolerance so that boundary cases that
    are equal up to rounding (``gamma = 1/6`` for Kolmogorov at ``m = 1``)
    count as divergent.

    Returns
    -------
    cond1 : bool
        ``sum lambda_k alpha_k^{2 gamma - 2H} |k|^{2m} < inf``.
    cond2 : bool
        ``sum lambda_k alpha_k^{-2H} |k|^{2m + 2 gamma} < inf``.
    """
    if m < 0 or int(m) != m:
        raise ValueError(f"m must be a non-negative integer, got {m}")
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    q1 = -p + 4 * gamma - 4 * h + 2 * m
    q2 = -p - 4 * h + 2 * m + 2 * gamma
    return (q1 < -2 - tol, q2 < -2 - tol)


def shell_groups(modes: Sequence[WaveMode]) -> dict[int, list[int]]:
    """Indices of ``modes`` grouped by ``|z|^2``."""
    groups: dict[int, list[int]] = {}
    for i, mode in enumerate(modes):
        groups.setdefault(mode.norm2, []).append(i)
    return dict(sorted(groups.items()))
