"""Random stream-function realizations on the unit torus.

A :class:`FieldPath` stores one complex coefficient path per half-lattice
mode. Point evaluation uses the real half-lattice form

    psi(x) = 2 sum_{K+} (c_r cos theta - c_i sin theta),
    v(x)   = -2 sum_{K+} (k2, -k1) (c_r sin theta + c_i cos theta),

with ``theta = 2 pi <z, x>``. Sums run mode by mode in a fixed order, so a
point gets the same bits whether it is evaluated alone or in a batch.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rng_mod
from .fou import FouParams, TimeGrid, cholesky_factor
from .spectrum import ModeSet, SpectrumConfig, mode_set

__all__ = [
    "FieldPath",
    "AliasingError",
    "synthesize",
    "eval_velocity",
    "eval_stream_and_gradient",
    "eval_grid_fft",
    "c1_norm",
    "c1_norm_series",
    "save_field",
    "load_field",
]

MAGIC = b"FOUFIELD 1\n"


class AliasingError(ValueError):
    pass


@dataclass(frozen=True)
class FieldPath:
    """One realization of psi on a time grid.

    Attributes
    ----------
    spectrum : SpectrumConfig
    nu : float
    grid : TimeGrid
    coeffs : ndarray of complex, shape (n_modes_plus, grid.n)
        Coefficient paths for K+ in lexicographic order.
    seed : int
    jitter : tuple of float
        Diagonal jitter used for each K+ mode's factorization.
    """

    spectrum: SpectrumConfig
    nu: float
    grid: TimeGrid
    coeffs: np.ndarray
    seed: int
    jitter: tuple[float, ...] = ()
    modes: ModeSet = field(init=False, repr=False, compare=False)
    z: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        modes = mode_set(self.spectrum)
        z, _ = modes.half_arrays()
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "z", z)
        if self.coeffs.shape != (len(z), self.grid.n):
            raise ValueError(f"coeffs shape {self.coeffs.shape} != ({len(z)}, {self.grid.n})")
        self.coeffs.setflags(write=False)

    @property
    def h(self) -> float:
        return self.spectrum.h

    @property
    def k(self) -> np.ndarray:
        return 2 * math.pi * self.z.astype(float)

    def metadata(self) -> dict:
        return {
            "seed": int(self.seed),
            "h": self.spectrum.h,
            "nu": self.nu,
            "spectrum": asdict(self.spectrum),
            "grid": {"t0": self.grid.t0, "dt": self.grid.dt, "n": self.grid.n},
            "jitter": list(self.jitter),
        }

    def digest(self) -> str:
        """sha256 of the serialized field, used to tag derived records."""
        buf = io.BytesIO()
        _write(self, buf)
        return hashlib.sha256(buf.getvalue()).hexdigest()

    def _check_index(self, j: int):
        if not 0 <= j < self.grid.n:
            raise IndexError(f"time index {j} outside field grid of {self.grid.n} points")


def synthesize(config: SpectrumConfig, nu: float, grid: TimeGrid, seed: int, threads: int = 1) -> FieldPath:
    """Draw every K+ coefficient path exactly.

    Mode ``i`` of K+ uses the streams ``(seed, i, RE)`` and ``(seed, i, IM)``,
    so the result does not depend on ``threads``.
    """
    modes = mode_set(config).positive
    h = config.h
    # Factor each distinct alpha once, serially; the cached factors are then
    # shared read-only by the workers.
    for mode in modes:
        if mode.lambda_k > 0:
            cholesky_factor(FouParams(mode.alpha_k, mode.lambda_k, nu, h), grid)

    def work(i):
        mode = modes[i]
        if mode.lambda_k == 0:
            return np.zeros(grid.n, dtype=complex), 0.0
        params = FouParams(mode.alpha_k, mode.lambda_k, nu, h)
        factor, jitter = cholesky_factor(params, grid)
        scale = math.sqrt(0.5 * params.lam)
        re = factor @ rng_mod.stream(seed, i, rng_mod.RE).standard_normal(grid.n)
        im = factor @ rng_mod.stream(seed, i, rng_mod.IM).standard_normal(grid.n)
        return (re * scale) + 1j * (im * scale), jitter

    if threads > 1 and len(modes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(len(modes))))
    else:
        results = [work(i) for i in range(len(modes))]
    coeffs = np.array([r[0] for r in results], dtype=complex).reshape(len(modes), grid.n)
    jitter = tuple(float(r[1]) for r in results)
    return FieldPath(config, float(nu), grid, coeffs, int(seed), jitter)


# --------------------------------------------------------------------------
# Point evaluation

def _points(x) -> tuple[np.ndarray, bool]:
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    return pts.reshape(-1, 2), single


def eval_velocity(field: FieldPath, x, j: int) -> np.ndarray:
    """Velocity ``v = grad-perp psi`` at time index ``j``.

    ``x`` is a point ``(2,)`` or an array of points ``(n, 2)``; the result
    has the same shape.
    """
    field._check_index(j)
    pts, single = _points(x)
    v1 = np.zeros(len(pts))
    v2 = np.zeros(len(pts))
    two_pi = 2 * math.pi
    for (z1, z2), c in zip(field.z, field.coeffs[:, j]):
        theta = two_pi * (z1 * pts[:, 0] + z2 * pts[:, 1])
        s = c.real * np.sin(theta) + c.imag * np.cos(theta)
        v1 -= (2 * two_pi * z2) * s
        v2 += (2 * two_pi * z1) * s
    out = np.stack([v1, v2], axis=-1)
    return out[0] if single else out


def eval_stream_and_gradient(field: FieldPath, x, j: int) -> np.ndarray:
    """``(psi, d1 psi, d2 psi)`` at time index ``j``; shape ``(3,)`` or ``(n, 3)``."""
    field._check_index(j)
    pts, single = _points(x)
    psi = np.zeros(len(pts))
    d1 = np.zeros(len(pts))
    d2 = np.zeros(len(pts))
    two_pi = 2 * math.pi
    for (z1, z2), c in zip(field.z, field.coeffs[:, j]):
        theta = two_pi * (z1 * pts[:, 0] + z2 * pts[:, 1])
        cos, sin = np.cos(theta), np.sin(theta)
        psi += 2 * (c.real * cos - c.imag * sin)
        s = c.real * sin + c.imag * cos
        d1 -= (2 * two_pi * z1) * s
        d2 -= (2 * two_pi * z2) * s
    out = np.stack([psi, d1, d2], axis=-1)
    return out[0] if single else out


# --------------------------------------------------------------------------
# Grid evaluation

def _spectral_grid(field: FieldPath, j: int, n: int) -> np.ndarray:
    """Full-lattice psi-hat on an n x n FFT grid."""
    r = field.spectrum.cutoff_R
    if n < 2 * r + 2:
        raise AliasingError(f"grid resolution {n} aliases the cutoff band; need N >= {2 * r + 2}")
    hat = np.zeros((n, n), dtype=complex)
    c = field.coeffs[:, j]
    hat[field.z[:, 0] % n, field.z[:, 1] % n] = c
    hat[(-field.z[:, 0]) % n, (-field.z[:, 1]) % n] = np.conj(c)
    return hat


def eval_grid_fft(field: FieldPath, j: int, n: int, return_residue: bool = False):
    """``psi, v1, v2`` on the grid ``x = (i1/N, i2/N)``, indexed ``[i1, i2]``.

    With ``return_residue`` the largest discarded imaginary part is also
    returned.
    """
    field._check_index(j)
    hat = _spectral_grid(field, j, n)
    freq = np.fft.fftfreq(n, d=1.0 / n)  # signed integers
    k1 = 2 * math.pi * freq[:, None]
    k2 = 2 * math.pi * freq[None, :]
    stack = np.stack([hat, 1j * k2 * hat, -1j * k1 * hat])
    vals = np.fft.ifft2(stack, axes=(-2, -1)) * (n * n)
    residue = float(np.max(np.abs(vals.imag))) if vals.size else 0.0
    psi, v1, v2 = vals.real
    if return_residue:
        return psi, v1, v2, residue
    return psi, v1, v2


def _c1_grid(field: FieldPath, j: int, m: int) -> np.ndarray:
    hat = _spectral_grid(field, j, m)
    freq = np.fft.fftfreq(m, d=1.0 / m)
    k1 = 2 * math.pi * freq[:, None]
    k2 = 2 * math.pi * freq[None, :]
    stack = np.stack([hat, 1j * k1 * hat, 1j * k2 * hat])
    vals = np.fft.ifft2(stack, axes=(-2, -1)).real * (m * m)
    return np.sqrt(np.sum(vals * vals, axis=0))


def c1_norm(field: FieldPath, j: int, m: int = 64) -> float:
    """max over an m x m grid of sqrt(psi^2 + (d1 psi)^2 + (d2 psi)^2)."""
    field._check_index(j)
    return float(np.max(_c1_grid(field, j, m)))


def c1_norm_series(field: FieldPath, m: int = 64, start: int = 0, stop: int | None = None) -> np.ndarray:
    """c1_norm at every time index in ``[start, stop)``."""
    stop = field.grid.n if stop is None else stop
    return np.array([c1_norm(field, j, m) for j in range(start, stop)])


# --------------------------------------------------------------------------
# Serialization

def _write(field: FieldPath, fh):
    header = json.dumps(field.metadata(), sort_keys=True).encode("utf-8")
    fh.write(MAGIC)
    fh.write(header + b"\n")
    data = np.empty((field.coeffs.shape[0], field.grid.n, 2), dtype="<f8")
    data[..., 0] = field.coeffs.real
    data[..., 1] = field.coeffs.imag
    fh.write(data.tobytes())


def save_field(field: FieldPath, path) -> None:
    with open(path, "wb") as fh:
        _write(field, fh)


def load_field(path) -> FieldPath:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ValueError(f"{path} is not a field file")
    rest = raw[len(MAGIC):]
    line_end = rest.index(b"\n")
    meta = json.loads(rest[:line_end].decode("utf-8"))
    spec = meta["spectrum"]
    spec["table"] = tuple(tuple(e) for e in spec.get("table", ()))
    config = SpectrumConfig(**spec)
    grid = TimeGrid(**meta["grid"])
    data = np.frombuffer(rest[line_end + 1:], dtype="<f8")
    n_plus = len(mode_set(config).positive)
    data = data.reshape(n_plus, grid.n, 2)
    coeffs = data[..., 0] + 1j * data[..., 1]
    return FieldPath(config, meta["nu"], grid, coeffs, meta["seed"], tuple(meta["jitter"]))
