"""Stokes-law particles and passive tracers in a frozen field realization.

The inertial system is first order in ``u = (x, y)``:

    x' = y,    y' = (v(x, t) - y) / tau.

One particle step spans two field steps, so the Runge-Kutta stages at
``t``, ``t + h/2`` and ``t + h`` land on field indices ``j``, ``j + 1`` and
``j + 2`` and no coefficient path is ever interpolated. Stage arithmetic
happens in the universal cover; positions are wrapped onto ``[0, 1)^2``
once per step.

For ``h / tau`` beyond the classical RK4 stability interval the linear
drag is integrated exactly with a fourth-order exponential Runge-Kutta
scheme (Cox-Matthews ETDRK4), which uses the same stage indices.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .field import FieldPath, eval_velocity

__all__ = [
    "ParticleState",
    "SimConfig",
    "NonFiniteStateError",
    "Trajectory",
    "rhs",
    "rk4_step",
    "etdrk4_step",
    "tracer_step",
    "integrate",
    "integrate_tracer",
    "wrap",
    "save_trajectory",
    "load_trajectory",
]

SCHEMES = ("auto", "rk4", "etdrk4")
MAGIC = b"FOUTRAJ 1\n"


class NonFiniteStateError(FloatingPointError):
    def __init__(self, particle: int, step: int):
        super().__init__(f"particle {particle} became non-finite at step {step}")
        self.particle = particle
        self.step = step


@dataclass(frozen=True)
class ParticleState:
    """Position on the unit torus and velocity."""

    x: tuple[float, float]
    y: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not all(0.0 <= c < 1.0 for c in self.x):
            raise ValueError(f"position {self.x} is not in [0, 1)^2")
        if not all(math.isfinite(c) for c in self.y):
            raise ValueError(f"velocity {self.y} is not finite")


@dataclass(frozen=True)
class SimConfig:
    """Integration settings.

    ``dt_particle`` is always twice the field step; it is derived, never set.
    ``tau = 0`` selects the tracer equation.
    """

    tau: float
    dt_field: float
    n_steps: int
    t_start_index: int = 0
    stride: int = 10
    scheme: str = "auto"

    def __post_init__(self):
        if not self.tau >= 0:
            raise ValueError(f"tau must be non-negative, got {self.tau}")
        if not self.dt_field > 0:
            raise ValueError("dt_field must be positive")
        if self.n_steps < 0 or self.t_start_index < 0 or self.stride < 1:
            raise ValueError("n_steps and t_start_index must be >= 0 and stride >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")

    @property
    def dt_particle(self) -> float:
        return 2.0 * self.dt_field

    @property
    def end_index(self) -> int:
        return self.t_start_index + 2 * self.n_steps

    def resolved_scheme(self) -> str:
        if self.scheme != "auto":
            return self.scheme
        return "etdrk4" if self.dt_particle > self.tau else "rk4"


def wrap(x: np.ndarray) -> np.ndarray:
    out = x - np.floor(x)
    # x slightly below zero rounds to exactly 1.0 after the subtraction
    out[out >= 1.0] = 0.0
    return out


def _check(field: FieldPath, config: SimConfig):
    if not math.isclose(config.dt_field, field.grid.dt, rel_tol=1e-12):
        raise ValueError(f"config dt_field {config.dt_field} != field grid step {field.grid.dt}")
    if config.end_index >= field.grid.n:
        raise IndexError(
            f"{config.n_steps} steps from index {config.t_start_index} need field index "
            f"{config.end_index}, grid has {field.grid.n} points"
        )


def rhs(field: FieldPath, tau: float, j: int, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Right-hand side ``(y, (v(x, t_j) - y) / tau)``."""
    if not tau > 0:
        raise ValueError("rhs needs tau > 0; use the tracer integrator for tau = 0")
    y = np.asarray(y, dtype=float)
    return y.copy(), (eval_velocity(field, x, j) - y) / tau


def rk4_step(field: FieldPath, tau: float, h: float, j: int, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Classical RK4 over one particle step from field index ``j``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    kx1, ky1 = rhs(field, tau, j, x, y)
    kx2, ky2 = rhs(field, tau, j + 1, x + 0.5 * h * kx1, y + 0.5 * h * ky1)
    kx3, ky3 = rhs(field, tau, j + 1, x + 0.5 * h * kx2, y + 0.5 * h * ky2)
    kx4, ky4 = rhs(field, tau, j + 2, x + h * kx3, y + h * ky3)
    x_new = x + h / 6.0 * (kx1 + 2 * kx2 + 2 * kx3 + kx4)
    y_new = y + h / 6.0 * (ky1 + 2 * ky2 + 2 * ky3 + ky4)
    return wrap(x_new), y_new


def _phi(z: float, kmax: int = 4) -> list[float]:
    """phi_0..phi_kmax at a scalar z, phi_0 = exp."""
    if abs(z) < 2.0:
        out = []
        for k in range(kmax + 1):
            term = 1.0 / math.factorial(k)
            total = term
            for n in range(1, 40):
                term *= z / (n + k)
                total += term
            out.append(total)
        return out
    out = [math.exp(z)]
    for k in range(kmax):
        out.append((out[k] - 1.0 / math.factorial(k)) / z)
    return out


@dataclass(frozen=True)
class _EtdCoefficients:
    e_half: float      # e^{mu/2}
    x_half: float      # x-gain of y over h/2:  (h/2) phi_1(mu/2)
    g_half_x: float    # (h/2) * (h/2) phi_2(mu/2)   acting on N/tau
    g_half_y: float    # (h/2) phi_1(mu/2)
    e_full: float
    x_full: float
    f1: tuple[float, float]
    f2: tuple[float, float]
    f3: tuple[float, float]


def _etd_coefficients(tau: float, h: float) -> _EtdCoefficients:
    mu = -h / tau
    p = _phi(mu)
    q = _phi(mu / 2.0)
    half = h / 2.0
    # For L = [[0, 1], [0, -1/tau]], phi_k(hL) = [[1/k!, h phi_{k+1}(mu)], [0, phi_k(mu)]].
    def pair(a, b, c):
        top = h * (a * p[2] + b * p[3] + c * p[4])
        bottom = a * p[1] + b * p[2] + c * p[3]
        return (h * top, h * bottom)

    return _EtdCoefficients(
        e_half=q[0],
        x_half=half * q[1],
        g_half_x=half * half * q[2],
        g_half_y=half * q[1],
        e_full=p[0],
        x_full=h * p[1],
        f1=pair(1.0, -3.0, 4.0),
        f2=pair(0.0, 1.0, -2.0),
        f3=pair(0.0, -1.0, 4.0),
    )


def etdrk4_step(field: FieldPath, tau: float, h: float, j: int, x, y, coef: _EtdCoefficients | None = None):
    """Exponential RK4 step; the drag term is integrated exactly."""
    c = coef or _etd_coefficients(tau, h)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    def half_flow(xs, ys, n):
        return xs + c.x_half * ys + c.g_half_x * n, c.e_half * ys + c.g_half_y * n

    nu_ = eval_velocity(field, x, j) / tau
    ax, ay = half_flow(x, y, nu_)
    na = eval_velocity(field, ax, j + 1) / tau
    bx, by = half_flow(x, y, na)
    nb = eval_velocity(field, bx, j + 1) / tau
    cx, cy = half_flow(ax, ay, 2.0 * nb - nu_)
    nc = eval_velocity(field, cx, j + 2) / tau
    x_new = (x + c.x_full * y + c.f1[0] * nu_ + c.f2[0] * 2.0 * (na + nb) + c.f3[0] * nc)
    y_new = (c.e_full * y + c.f1[1] * nu_ + c.f2[1] * 2.0 * (na + nb) + c.f3[1] * nc)
    return wrap(x_new), y_new


def tracer_step(field: FieldPath, h: float, j: int, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    k1 = eval_velocity(field, x, j)
    k2 = eval_velocity(field, x + 0.5 * h * k1, j + 1)
    k3 = eval_velocity(field, x + 0.5 * h * k2, j + 1)
    k4 = eval_velocity(field, x + h * k3, j + 2)
    return wrap(x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))


# --------------------------------------------------------------------------
# Trajectories

@dataclass
class Trajectory:
    """Stored frames of ``(x1, x2, y1, y2)`` per particle.

    ``steps`` are particle-step counts since the start; the last frame is
    always the final state.
    """

    steps: np.ndarray
    frames: np.ndarray  # (n_frames, n_particles, 4)
    header: dict = field(default_factory=dict)

    @property
    def final_x(self) -> np.ndarray:
        return self.frames[-1, :, :2]

    @property
    def final_y(self) -> np.ndarray:
        return self.frames[-1, :, 2:]


def _frame_steps(config: SimConfig) -> list[int]:
    steps = list(range(0, config.n_steps + 1, config.stride))
    if steps[-1] != config.n_steps:
        steps.append(config.n_steps)
    return steps


def _run_chunk(field, config, x, y, offset):
    tau = config.tau
    h = config.dt_particle
    scheme = None if tau == 0 else config.resolved_scheme()
    coef = _etd_coefficients(tau, h) if scheme == "etdrk4" else None
    keep = set(_frame_steps(config))
    frames = []
    for step in range(config.n_steps + 1):
        if step in keep:
            frames.append(np.concatenate([x, y], axis=1))
        if step == config.n_steps:
            break
        j = config.t_start_index + 2 * step
        if tau == 0:
            x = tracer_step(field, h, j, x)
        elif scheme == "etdrk4":
            x, y = etdrk4_step(field, tau, h, j, x, y, coef)
        else:
            x, y = rk4_step(field, tau, h, j, x, y)
        bad = ~(np.isfinite(x).all(axis=1) & np.isfinite(y).all(axis=1))
        if bad.any():
            raise NonFiniteStateError(offset + int(np.argmax(bad)), step + 1)
    return np.stack(frames) if frames else np.zeros((0, len(x), 4))


def _integrate(field, config, x0, y0, threads):
    _check(field, config)
    x0 = np.asarray(x0, dtype=float).reshape(-1, 2)
    y0 = np.asarray(y0, dtype=float).reshape(-1, 2)
    if x0.shape != y0.shape:
        raise ValueError("positions and velocities must have the same shape")
    if ((x0 < 0) | (x0 >= 1)).any():
        raise ValueError("initial positions must lie in [0, 1)^2")
    n = len(x0)
    steps = np.array(_frame_steps(config))
    header = {
        "config": asdict(config),
        "scheme": "tracer" if config.tau == 0 else config.resolved_scheme(),
        "field_sha256": field.digest(),
        "n_particles": n,
    }
    if n == 0:
        return Trajectory(steps, np.zeros((len(steps), 0, 4)), header)
    threads = max(1, min(int(threads), n))
    bounds = np.linspace(0, n, threads + 1).astype(int)
    chunks = [(bounds[i], bounds[i + 1]) for i in range(threads)]

    def work(chunk):
        a, b = chunk
        return _run_chunk(field, config, x0[a:b].copy(), y0[a:b].copy(), a)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(chunks[0])]
    return Trajectory(steps, np.concatenate(parts, axis=1), header)


def integrate(field: FieldPath, config: SimConfig, x0, y0, threads: int = 1) -> Trajectory:
    """Integrate independent inertial particles.

    Particles are split into contiguous blocks across ``threads``; every
    evaluation is elementwise, so the output does not depend on the split.

    Raises
    ------
    NonFiniteStateError
        If any state becomes NaN or infinite.
    """
    if not config.tau > 0:
        raise ValueError("inertial integration needs tau > 0; use integrate_tracer")
    return _integrate(field, config, x0, y0, threads)


def integrate_tracer(field: FieldPath, config: SimConfig, x0, threads: int = 1) -> Trajectory:
    """Passive tracers ``x' = v(x, t)``; stored velocities are zero."""
    if config.tau != 0:
        raise ValueError("tracer integration needs tau = 0")
    x0 = np.asarray(x0, dtype=float).reshape(-1, 2)
    return _integrate(field, config, x0, np.zeros_like(x0), threads)


def save_trajectory(traj: Trajectory, path, extra: dict | None = None) -> None:
    header = dict(traj.header)
    if extra:
        header.update(extra)
    header["steps"] = [int(s) for s in traj.steps]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(traj.frames, dtype="<f8").tobytes())


def load_trajectory(path) -> Trajectory:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ValueError(f"{path} is not a trajectory file")
    rest = raw[len(MAGIC):]
    end = rest.index(b"\n")
    header = json.loads(rest[:end])
    steps = np.array(header["steps"])
    frames = np.frombuffer(rest[end + 1:], dtype="<f8").reshape(len(steps), header["n_particles"], 4)
    return Trajectory(steps, frames.copy(), header)
