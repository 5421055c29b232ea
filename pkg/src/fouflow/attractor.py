"""Absorbing balls and pullback point clouds.

The velocity component of every trajectory obeys

    |y(t)|^2 <= e^{-(t-s)/tau} |y(s)|^2
                + (1/tau) int_s^t e^{-(t-u)/tau} |psi(u)|_{C^1}^2 du,

so the ball of squared radius ``(1 + delta)/tau * int_{-inf}^t
e^{-(t-u)/tau} |psi(u)|_{C^1}^2 du`` is forward invariant and absorbing.
The infinite history is truncated at ``T_tail = tau ln(1/eps)``; the
neglected part is bounded by ``eps (1 + delta) max |psi|_{C^1}^2`` and
added back as a margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import FieldPath, c1_norm_series
from .particles import SimConfig, integrate
from . import rng as rng_mod

__all__ = [
    "AbsorbingRadius",
    "AttractorCloud",
    "InsufficientHistoryError",
    "InvarianceReport",
    "exponential_history",
    "tail_steps",
    "absorbing_radius",
    "forward_invariance_check",
    "pullback_snapshot",
    "semidistance",
    "nesting_distances",
]

EPS_TAIL = 1e-8


class InsufficientHistoryError(IndexError):
    pass


@dataclass(frozen=True)
class AbsorbingRadius:
    r: float
    delta: float
    tail_error: float
    index: int


@dataclass(frozen=True)
class AttractorCloud:
    x: np.ndarray  # (n, 2)
    y: np.ndarray  # (n, 2)
    pullback_time: float
    field_sha256: str
    seed: int

    @property
    def points(self) -> np.ndarray:
        return np.concatenate([self.x, self.y], axis=1)


def exponential_history(values: np.ndarray, dt: float, tau: float) -> np.ndarray:
    """Running ``int_{t_0}^{t_i} e^{-(t_i - u)/tau} f(u) du`` for every ``i``.

    ``f`` is interpolated linearly between grid points and the exponential
    is integrated exactly against it, which stays accurate when ``dt`` is
    much larger than ``tau``.
    """
    values = np.asarray(values, dtype=float)
    r = dt / tau
    decay = math.exp(-r)
    ratio = -math.expm1(-r) / r  # (1 - e^{-r}) / r
    w_old = tau * (ratio - decay)
    w_new = tau * (1.0 - ratio)
    out = np.zeros_like(values)
    for i in range(1, len(values)):
        out[i] = decay * out[i - 1] + w_old * values[i - 1] + w_new * values[i]
    return out


def tail_steps(tau: float, dt: float, eps: float = EPS_TAIL) -> int:
    """Number of field steps covering ``T_tail = tau ln(1/eps)``."""
    return int(math.ceil(tau * math.log(1.0 / eps) / dt - 1e-9))


def absorbing_radius(
    field: FieldPath,
    tau: float,
    delta: float,
    index: int,
    eps: float = EPS_TAIL,
    m: int = 64,
    c1_sq: np.ndarray | None = None,
) -> AbsorbingRadius:
    """Radius of the absorbing velocity ball at field index ``index``.

    ``c1_sq`` may hold precomputed ``c1_norm**2`` for every grid index.
    """
    if not tau > 0 or not delta > 0:
        raise ValueError("tau and delta must be positive")
    n_tail = tail_steps(tau, field.grid.dt, eps)
    start = index - n_tail
    if start < 0 or index >= field.grid.n:
        raise InsufficientHistoryError(
            f"radius at index {index} needs {n_tail} steps of history "
            f"(T_tail = {n_tail * field.grid.dt:g}); the field starts at index 0"
        )
    if c1_sq is None:
        window = c1_norm_series(field, m, start, index + 1) ** 2
    else:
        window = np.asarray(c1_sq[start:index + 1], dtype=float)
    integral = exponential_history(window, field.grid.dt, tau)[-1]
    t_tail = n_tail * field.grid.dt
    tail_error = math.exp(-t_tail / tau) * (1 + delta) * float(window.max())
    r2 = (1 + delta) / tau * integral + tail_error
    return AbsorbingRadius(math.sqrt(max(r2, 0.0)), delta, tail_error, index)


def _uniform_ball(gen: np.random.Generator, n: int, radius: float) -> np.ndarray:
    angle = gen.uniform(0.0, 2 * math.pi, n)
    rad = radius * np.sqrt(gen.uniform(0.0, 1.0, n))
    return np.stack([rad * np.cos(angle), rad * np.sin(angle)], axis=1)


@dataclass(frozen=True)
class InvarianceReport:
    worst_ratio: float
    r_start: float
    r_end: float
    offenders: tuple[int, ...]

    @property
    def passed(self) -> bool:
        return not self.offenders


def forward_invariance_check(
    field: FieldPath,
    tau: float,
    delta: float,
    start: int,
    n_steps: int,
    n_samples: int,
    seed: int,
    slack: float = 1e-6,
    m: int = 64,
    threads: int = 1,
) -> InvarianceReport:
    """Start on the sphere ``|y| = r(start)`` and check ``|y| <= r(end)``."""
    c1_sq = c1_norm_series(field, m) ** 2
    r0 = absorbing_radius(field, tau, delta, start, m=m, c1_sq=c1_sq)
    end = start + 2 * n_steps
    r1 = absorbing_radius(field, tau, delta, end, m=m, c1_sq=c1_sq)
    gen = rng_mod.stream(seed, "forward-invariance")
    x0 = gen.uniform(0.0, 1.0, (n_samples, 2))
    angle = gen.uniform(0.0, 2 * math.pi, n_samples)
    y0 = r0.r * np.stack([np.cos(angle), np.sin(angle)], axis=1)
    config = SimConfig(tau, field.grid.dt, n_steps, t_start_index=start, stride=max(n_steps, 1))
    traj = integrate(field, config, x0, y0, threads=threads)
    speed = np.linalg.norm(traj.final_y, axis=1)
    if r1.r > 0:
        ratio = speed / r1.r
    else:
        ratio = np.where(speed > 0, np.inf, 0.0)
    offenders = tuple(int(i) for i in np.nonzero(ratio > 1 + slack)[0])
    return InvarianceReport(float(ratio.max()) if len(ratio) else 0.0, r0.r, r1.r, offenders)


def pullback_snapshot(
    field: FieldPath,
    tau: float,
    delta: float,
    end: int,
    depth_steps: int,
    n_samples: int,
    seed: int,
    m: int = 64,
    threads: int = 1,
    c1_sq: np.ndarray | None = None,
    eps: float = EPS_TAIL,
) -> AttractorCloud:
    """Integrate a uniform sample of the absorbing set from ``end - 2*depth_steps`` to ``end``.

    ``depth_steps`` counts particle steps. Initial states for a given seed
    are the same in distribution for every depth (only the radius differs),
    and the same draws are reused so that depth comparisons are paired.
    """
    start = end - 2 * depth_steps
    if start < 0:
        raise InsufficientHistoryError(f"pullback of {depth_steps} steps from index {end} starts before the field")
    radius = absorbing_radius(field, tau, delta, start, eps, m=m, c1_sq=c1_sq)
    gen = rng_mod.stream(seed, "pullback")
    x0 = gen.uniform(0.0, 1.0, (n_samples, 2))
    y0 = _uniform_ball(gen, n_samples, radius.r)
    config = SimConfig(tau, field.grid.dt, depth_steps, t_start_index=start, stride=max(depth_steps, 1))
    traj = integrate(field, config, x0, y0, threads=threads)
    return AttractorCloud(
        traj.final_x.copy(),
        traj.final_y.copy(),
        pullback_time=depth_steps * 2 * field.grid.dt,
        field_sha256=traj.header["field_sha256"],
        seed=int(seed),
    )


def semidistance(a: np.ndarray, b: np.ndarray, block: int = 1024) -> float:
    """Hausdorff semidistance ``max_{p in a} min_{q in b} |p - q|`` (brute force)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) == 0:
        return 0.0
    if len(b) == 0:
        return math.inf
    worst = 0.0
    for i in range(0, len(a), block):
        diff = a[i:i + block, None, :] - b[None, :, :]
        nearest = np.sqrt(np.min(np.sum(diff * diff, axis=-1), axis=1))
        worst = max(worst, float(nearest.max()))
    return worst


def nesting_distances(clouds: list[AttractorCloud]) -> list[float]:
    """Velocity-space semidistance of each cloud from the next deeper one.

    ``clouds`` are ordered by increasing pullback depth; entry ``i`` is
    ``dist(clouds[i].y, clouds[i + 1].y)``, i.e. how far the shallower
    cloud still sticks out of the deeper one.
    """
    return [semidistance(clouds[i].y, clouds[i + 1].y) for i in range(len(clouds) - 1)]
