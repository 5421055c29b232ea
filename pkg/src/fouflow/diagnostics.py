"""Monte-Carlo estimators checked against closed-form targets."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng as rng_mod
from .field import FieldPath, eval_velocity, synthesize
from .fou import FouParams, TimeGrid, fou_covariance, fou_structure_function, structure_function_bounds
from .spectrum import SpectrumConfig, mode_energy, mode_set, shell_groups

__all__ = [
    "ClusterStats",
    "LogLogFit",
    "StructureFunctionResult",
    "SpectrumEstimate",
    "loglog_fit",
    "velocity_structure_analytic",
    "velocity_structure_upper",
    "structure_function_time",
    "energy_spectrum_estimate",
    "dispersion_index",
    "velocity_autocovariance_analytic",
    "velocity_autocovariance_mc",
    "ensemble_seeds",
]


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    stderr: float


def loglog_fit(x: Sequence[float], y: Sequence[float]) -> LogLogFit:
    """Ordinary least squares of log y on log x."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    if len(lx) < 3:
        raise ValueError("a slope fit needs at least 3 points")
    design = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - design @ coef
    dof = len(lx) - 2
    sxx = np.sum((lx - lx.mean()) ** 2)
    stderr = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else 0.0
    return LogLogFit(float(coef[0]), float(coef[1]), stderr)


def ensemble_seeds(seed: int, count: int) -> list[int]:
    return [rng_mod.derive_seed(seed, "ensemble", i) for i in range(count)]


# --------------------------------------------------------------------------
# Time structure function of the velocity

def velocity_structure_analytic(config: SpectrumConfig, nu: float, lag: float) -> float:
    """E|v(x, t + lag) - v(x, t)|^2, independent of x.

    Each K+ mode contributes ``2 |k|^2`` times the structure function of
    its coefficient.
    """
    total = 0.0
    for mode in mode_set(config).positive:
        if mode.lambda_k == 0:
            continue
        params = FouParams(mode.alpha_k, mode.lambda_k, nu, config.h)
        total += 2 * mode.alpha_k * fou_structure_function(params, lag)
    return total


def velocity_structure_upper(config: SpectrumConfig, nu: float, lag: float) -> float:
    """Upper bound ``C(H, nu) |lag|^{2H}`` assembled mode by mode."""
    total = 0.0
    for mode in mode_set(config).positive:
        if mode.lambda_k == 0:
            continue
        params = FouParams(mode.alpha_k, mode.lambda_k, nu, config.h)
        total += 2 * mode.alpha_k * structure_function_bounds(params, lag, config.h).upper
    return total


@dataclass(frozen=True)
class StructureFunctionResult:
    lags: np.ndarray
    estimate: np.ndarray
    band: np.ndarray  # 4-sigma CLT half-width
    analytic: np.ndarray
    upper: np.ndarray
    fit: LogLogFit | None


def structure_function_time(
    config: SpectrumConfig,
    nu: float,
    grid: TimeGrid,
    x: Sequence[float],
    lag_indices: Sequence[int],
    ensemble: int,
    seed: int,
    threads: int = 1,
) -> StructureFunctionResult:
    """Monte-Carlo E|v(x, t0 + lag) - v(x, t0)|^2 over independent fields.

    The slope is fitted over the non-zero lags when there are at least 3.
    """
    lag_indices = [int(j) for j in lag_indices]
    if any(j < 0 or j >= grid.n for j in lag_indices):
        raise IndexError("lag indices must lie inside the grid")
    point = np.asarray(x, dtype=float)
    samples = np.empty((ensemble, len(lag_indices)))
    for m, member_seed in enumerate(ensemble_seeds(seed, ensemble)):
        field = synthesize(config, nu, grid, member_seed, threads=threads)
        v0 = eval_velocity(field, point, 0)
        for i, j in enumerate(lag_indices):
            dv = eval_velocity(field, point, j) - v0
            samples[m, i] = dv @ dv
    estimate = samples.mean(axis=0)
    band = 4 * samples.std(axis=0, ddof=1) / math.sqrt(ensemble) if ensemble > 1 else np.full(len(lag_indices), np.inf)
    lags = np.array(lag_indices) * grid.dt
    analytic = np.array([velocity_structure_analytic(config, nu, s) for s in lags])
    upper = np.array([velocity_structure_upper(config, nu, s) for s in lags])
    positive = lags > 0
    fit = loglog_fit(lags[positive], estimate[positive]) if positive.sum() >= 3 else None
    return StructureFunctionResult(lags, estimate, band, analytic, upper, fit)


# --------------------------------------------------------------------------
# Energy spectrum

@dataclass(frozen=True)
class SpectrumEstimate:
    z: np.ndarray          # K+ indices (n, 2)
    measured: np.ndarray   # per-mode energy estimate
    band: np.ndarray       # 4-sigma half-width
    analytic: np.ndarray
    shells: np.ndarray     # |z|^2 of each shell
    shell_energy: np.ndarray  # mean measured per-mode energy in each shell
    fit: LogLogFit | None

    @property
    def ratios(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.analytic > 0, self.measured / self.analytic, 0.0)

    def within_band(self) -> np.ndarray:
        return np.abs(self.measured - self.analytic) <= self.band


def energy_spectrum_estimate(fields: Sequence[FieldPath], j: int = 0) -> SpectrumEstimate:
    """Per-mode energy ``|k|^2 / 2 * mean |psi_k|^2`` and its shell fit.

    The fit regresses ``|k| * E_shell`` on ``|k|`` where ``E_shell`` is the
    mean per-mode energy of a shell; it is skipped for fewer than 3
    non-empty shells.
    """
    if len(fields) < 2:
        raise ValueError("need at least 2 ensemble members")
    first = fields[0]
    z = first.z
    alpha = 4 * math.pi ** 2 * np.sum(z * z, axis=1)
    power = np.array([np.abs(f.coeffs[:, j]) ** 2 for f in fields])  # (members, modes)
    energy = 0.5 * alpha[None, :] * power
    measured = energy.mean(axis=0)
    band = 4 * energy.std(axis=0, ddof=1) / math.sqrt(len(fields))
    modes = first.modes.positive
    analytic = np.array([mode_energy(m, first.h) for m in modes])
    groups = shell_groups(modes)
    shells = np.array(list(groups.keys()))
    shell_energy = np.array([measured[idx].mean() for idx in groups.values()])
    keep = shell_energy > 0
    fit = None
    if keep.sum() >= 3:
        k_norm = 2 * math.pi * np.sqrt(shells[keep].astype(float))
        fit = loglog_fit(k_norm, k_norm * shell_energy[keep])
    return SpectrumEstimate(z, measured, band, analytic, shells, shell_energy, fit)


# --------------------------------------------------------------------------
# Clustering

@dataclass(frozen=True)
class ClusterStats:
    box_resolution: int
    dispersion_index: float
    n_particles: int
    sparse: bool = False


def dispersion_index(positions, m: int = 10) -> ClusterStats:
    """Variance-to-mean ratio of counts over an m x m box partition.

    Uses the population variance; a uniform Poisson scatter gives about 1.
    """
    pts = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("dispersion index of an empty set is undefined")
    idx = np.minimum((pts * m).astype(int), m - 1)
    counts = np.bincount(idx[:, 0] * m + idx[:, 1], minlength=m * m).astype(float)
    mean = counts.mean()
    sparse = mean < 5
    if sparse:
        warnings.warn(f"mean box count {mean:.2f} < 5; dispersion index is noisy", stacklevel=2)
    return ClusterStats(int(m), float(counts.var() / mean), len(pts), sparse)


# --------------------------------------------------------------------------
# Velocity autocovariance

def velocity_autocovariance_analytic(config: SpectrumConfig, nu: float, displacement, lag: float) -> np.ndarray:
    """E[v(x, t) v(y, s)^T] for ``displacement = x - y`` and ``lag = t - s``.

    Sum over the full lattice of ``k_perp k_perp^T Cov(psi_k(t), psi_k(s))
    cos(k . displacement)`` with ``k_perp = (k2, -k1)``.
    """
    d = np.asarray(displacement, dtype=float)
    out = np.zeros((2, 2))
    for mode in mode_set(config):
        if mode.lambda_k == 0:
            continue
        k1, k2 = mode.k
        kp = np.array([k2, -k1])
        cov = fou_covariance(FouParams(mode.alpha_k, mode.lambda_k, nu, config.h), lag)
        out += np.outer(kp, kp) * cov * math.cos(k1 * d[0] + k2 * d[1])
    return out


def velocity_autocovariance_mc(
    config: SpectrumConfig,
    nu: float,
    grid: TimeGrid,
    x: Sequence[float],
    y: Sequence[float],
    lag_index: int,
    ensemble: int,
    seed: int,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo E[v(x, t_lag) v(y, t_0)^T] and its 4-sigma band."""
    if not 0 <= lag_index < grid.n:
        raise IndexError("lag index outside the grid")
    samples = np.empty((ensemble, 2, 2))
    for m, member_seed in enumerate(ensemble_seeds(seed, ensemble)):
        field = synthesize(config, nu, grid, member_seed, threads=threads)
        samples[m] = np.outer(eval_velocity(field, x, lag_index), eval_velocity(field, y, 0))
    band = 4 * samples.std(axis=0, ddof=1) / math.sqrt(ensemble)
    return samples.mean(axis=0), band
