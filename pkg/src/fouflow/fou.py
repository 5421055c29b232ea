"""
Stationary fractional Ornstein-Uhlenbeck processes
==================================================

The stationary solution of

    X_t = X_0 - nu*alpha * int_0^t X_s ds + nu^H sqrt(lambda) beta^H_t

has covariance

    Cov(Y_t, Y_{t-s}) = C(H) lambda / alpha^{2H} * I(|s| nu alpha),
    I(w) = int_0^inf cos(w x) x^{1-2H} / (1 + x^2) dx,
    C(H) = Gamma(2H+1) sin(pi H) / pi,

and variance lambda Gamma(2H) H / alpha^{2H}. This module evaluates
I(w) to near machine precision, builds the Toeplitz covariance matrix
on a uniform grid and samples paths exactly through its Cholesky factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import linalg
from scipy.special import gamma as gamma_fn

__all__ = [
    "CHOLESKY_CAP",
    "FouParams",
    "TimeGrid",
    "RealFouPath",
    "StructureBounds",
    "QuadratureError",
    "FactorizationError",
    "GridTooLargeError",
    "hurst_constant",
    "cosine_integral",
    "fou_variance",
    "fou_covariance",
    "fou_structure_function",
    "structure_function_bounds",
    "fou_covariance_row",
    "fou_covariance_matrix",
    "cholesky_factor",
    "sample_real_fou",
    "sample_complex_coeff_pair",
]

CHOLESKY_CAP = 8192
JITTER_LADDER = (1e-12, 1e-10, 1e-8)
QUAD_TOL = 1e-11
PANEL_BUDGET = 1_000_000


class QuadratureError(RuntimeError):
    """Adaptive quadrature ran out of panels before reaching its tolerance."""

    def __init__(self, message: str, error_estimate: float):
        super().__init__(f"{message} (error estimate {error_estimate:.3e})")
        self.error_estimate = error_estimate


class FactorizationError(RuntimeError):
    pass


class GridTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class FouParams:
    """Coefficients of one fractional Langevin equation.

    Attributes
    ----------
    alpha : float
        Drift scale (mode frequency), > 0.
    lam : float
        Noise intensity, >= 0.
    nu : float
        Time-scale parameter, > 0.
    h : float
        Hurst parameter in (0, 1).
    """

    alpha: float
    lam: float
    nu: float
    h: float

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValueError(f"lam must be non-negative, got {self.lam}")
        if not (self.nu > 0 and math.isfinite(self.nu)):
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not 0 < self.h < 1:
            raise ValueError(f"h must lie in (0, 1), got {self.h}")

    def unit(self) -> "FouParams":
        return FouParams(self.alpha, 1.0, self.nu, self.h)


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    dt: float
    n: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (self.n - 1)


@dataclass(frozen=True)
class RealFouPath:
    grid: TimeGrid
    values: np.ndarray
    params: FouParams
    variance_scale: float
    jitter: float = 0.0


class StructureBounds(NamedTuple):
    lower: float | None
    upper: float


def hurst_constant(h: float) -> float:
    """C(H) = Gamma(2H+1) sin(pi H) / pi."""
    return float(gamma_fn(2 * h + 1) * math.sin(math.pi * h) / math.pi)


# --------------------------------------------------------------------------
# Gauss-Kronrod 7/15 rule (QUADPACK qk15 abscissae and weights)

_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

GK_NODES = np.concatenate([-_XGK[:7], [0.0], _XGK[6::-1]])
GK_WEIGHTS = np.concatenate([_WGK[:7], [_WGK[7]], _WGK[6::-1]])
_gauss_full = np.zeros(15)
# Gauss nodes are the odd-indexed Kronrod abscissae (1, 3, 5) and the centre.
for _i, _w in zip((1, 3, 5), _WG[:3]):
    _gauss_full[_i] = _w
    _gauss_full[14 - _i] = _w
_gauss_full[7] = _WG[3]
GAUSS_WEIGHTS = _gauss_full


def gauss_kronrod(f, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Apply the 15-point Kronrod rule to every panel [a_i, b_i].

    Returns the Kronrod estimates and ``|K15 - G7|`` per panel.
    """
    centre = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = centre[:, None] + half[:, None] * GK_NODES[None, :]
    fx = f(x)
    kron = half * (fx @ GK_WEIGHTS)
    gauss = half * (fx @ GAUSS_WEIGHTS)
    return kron, np.abs(kron - gauss)


def adaptive_panels(f, edges: np.ndarray, tol: float, budget: int = PANEL_BUDGET) -> tuple[float, float]:
    """Integrate over the union of panels, bisecting the worst panels until
    the summed error estimate drops below ``tol``.

    Every round splits all panels whose estimate exceeds the average share
    ``tol / n_panels`` (at least the single worst one).
    """
    a = np.asarray(edges[:-1], dtype=float)
    b = np.asarray(edges[1:], dtype=float)
    if not a.size:
        return 0.0, 0.0
    val, err = gauss_kronrod(f, a, b)
    used = a.size
    while err.sum() > tol:
        split = err > tol / err.size
        if not split.any():
            split = err == err.max()
        used += int(split.sum())
        if used > budget:
            raise QuadratureError("panel budget exhausted", float(err.sum()))
        mid = 0.5 * (a[split] + b[split])
        na = np.concatenate([a[split], mid])
        nb = np.concatenate([mid, b[split]])
        nval, nerr = gauss_kronrod(f, na, nb)
        keep = ~split
        a = np.concatenate([a[keep], na])
        b = np.concatenate([b[keep], nb])
        val = np.concatenate([val[keep], nval])
        err = np.concatenate([err[keep], nerr])
    order = np.argsort(a, kind="stable")
    return float(math.fsum(val[order])), float(err.sum())


# --------------------------------------------------------------------------
# I(w) = int_0^inf cos(w x) x^beta / (1 + x^2) dx,  beta = 1 - 2H

def _head_series(beta: float, omega: float, a: float) -> float:
    """Exact term-by-term integral over [0, a] for a <= 1/2 and omega*a <= 1/2.

    cos(w x)/(1+x^2) = sum_n (-1)^n S_n x^{2n} where S_n are the partial
    sums of the cosh(w) series; T_n = a^{2n} S_n is built recursively.
    """
    a2 = a * a
    wa2 = (omega * a) ** 2
    t = 0.0
    pw = 1.0  # (w a)^{2n} / (2n)!
    total = 0.0
    for n in range(60):
        if n > 0:
            pw *= wa2 / ((2 * n - 1) * (2 * n))
        t = a2 * t + pw
        term = (-1) ** n * t / (beta + 2 * n + 1)
        total += term
        if n > 4 and abs(term) < 1e-18 * abs(total):
            break
    return a ** (beta + 1) * total


def _tail_static(beta: float, x0: float) -> float:
    """int_x0^inf x^beta/(1+x^2) dx for x0 >= 2 via the 1/x^2 expansion."""
    total = 0.0
    for n in range(80):
        term = (-1) ** n * x0 ** (beta - 1 - 2 * n) / (1 + 2 * n - beta)
        total += term
        if abs(term) < 1e-18 * abs(total):
            break
    return total


def _tail_oscillatory(beta: float, omega: float, x0: float, max_terms: int = 80) -> float:
    """Asymptotic expansion of int_x0^inf cos(w x) g(x) dx for w*x0 >= 40.

    Repeated integration by parts gives
        -Re[ e^{i w x0} sum_m (-1)^m g^{(m)}(x0) / (i w)^{m+1} ].
    Taylor coefficients g^{(m)}/m! come from the convolution of the
    coefficients of x^beta and of 1/(1+x^2) = Im 1/(x - i).
    """
    # Work with x0^j-scaled coefficients so nothing overflows for tiny w.
    m = np.arange(max_terms)
    p = np.empty(max_terms)  # x0^j (x^beta)^{(j)} / j!
    p[0] = x0 ** beta
    for j in range(1, max_terms):
        p[j] = p[j - 1] * (beta - j + 1) / j
    z = 1.0 / (x0 - 1j)
    q = ((-1.0) ** m * (x0 * z) ** m * z).imag  # x0^r (1/(1+x^2))^{(r)} / r!
    g_scaled = np.array([np.dot(p[: k + 1], q[k::-1]) for k in range(max_terms)])
    # The envelope k!/(w x0)^k keeps shrinking while k < w*x0 (>= 40).
    wx = omega * x0
    n_terms = min(max_terms, int(wx))
    k = np.arange(n_terms)
    log_env = np.cumsum(np.log(np.maximum(k, 1))) - k * math.log(wx)
    phase = (-1.0) ** k / (1j) ** (k + 1)
    total = np.sum(phase * np.exp(log_env) * g_scaled[:n_terms]) / omega
    return float((-np.exp(1j * omega * x0) * total).real)


def _panel_edges(a: float, x_end: float, cap: float) -> np.ndarray:
    edges = [a]
    x = a
    while x < x_end:
        x = min(x + min(x, cap), x_end)
        edges.append(x)
    return np.array(edges)


SMALL_OMEGA = 1e-6


@lru_cache(maxsize=65536)
def cosine_integral(h: float, omega: float, tol: float = QUAD_TOL) -> float:
    """I(omega) = int_0^inf cos(omega x) x^{1-2H}/(1+x^2) dx.

    ``tol`` is absolute, relative to I(0) = pi / (2 sin(pi H)).
    """
    omega = abs(float(omega))
    beta = 1.0 - 2.0 * h
    scale = math.pi / (2.0 * math.sin(math.pi * h))
    if 0 < omega < SMALL_OMEGA:
        # I(0) - I(w) = w^{2H} int (1 - cos z) z^{-1-2H} dz - w^2 I(0)/2 + O(w^{2+2H})
        return scale * (1.0 + 0.5 * omega * omega) - increment_integral(h) * omega ** (2 * h)
    if omega > 0:
        a = min(0.5, 0.5 / omega)
        cap = math.pi / (4.0 * omega)
        x_end = max(2.0, 40.0 / omega)
    else:
        a, cap, x_end = 0.5, math.inf, 2.0

    head = _head_series(beta, omega, a)

    def integrand(x):
        return np.cos(omega * x) * x ** beta / (1.0 + x * x)

    body, _ = adaptive_panels(integrand, _panel_edges(a, x_end, cap), tol * scale)
    if omega > 0:
        tail = _tail_oscillatory(beta, omega, x_end)
    else:
        tail = _tail_static(beta, x_end)
    return head + body + tail


# --------------------------------------------------------------------------
# Moments

def fou_variance(params: FouParams) -> float:
    """Var(Y_t) = lambda Gamma(2H) H / alpha^{2H}."""
    h = params.h
    return float(params.lam * gamma_fn(2 * h) * h / params.alpha ** (2 * h))


def fou_covariance(params: FouParams, s: float) -> float:
    """Cov(Y_t, Y_{t-s}); even in ``s``."""
    omega = abs(s) * params.nu * params.alpha
    h = params.h
    prefactor = hurst_constant(h) * params.lam / params.alpha ** (2 * h)
    return prefactor * cosine_integral(h, omega)


def fou_structure_function(params: FouParams, s: float) -> float:
    """E|Y_t - Y_{t-s}|^2 = 2 (C(0) - C(s))."""
    h = params.h
    prefactor = hurst_constant(h) * params.lam / params.alpha ** (2 * h)
    omega = abs(s) * params.nu * params.alpha
    return 2.0 * prefactor * (cosine_integral(h, 0.0) - cosine_integral(h, omega))


def increment_integral(h: float) -> float:
    """int_0^inf (1 - cos z) z^{-1-2H} dz in closed form."""
    return math.pi / (2.0 * gamma_fn(2 * h + 1) * math.sin(math.pi * h))


def structure_function_bounds(
    params: FouParams, s: float, gamma: float, window: float | None = None
) -> StructureBounds:
    """Two-sided bounds on E|Y_t - Y_s|^2 for a lag ``s``.

    The upper bound holds for all lags with Hoelder exponent ``gamma``
    in (0, H]. The lower bound needs both times inside ``[-window, window]``
    and is only returned when ``window`` is given.
    """
    h = params.h
    if not 0 < gamma <= h:
        raise ValueError(f"gamma must lie in (0, H={h}], got {gamma}")
    lag = abs(float(s))
    lam, nu, alpha = params.lam, params.nu, params.alpha
    c_h = hurst_constant(h)
    if gamma == h:
        upper = 2.0 * c_h * lam * (nu * lag) ** (2 * h) * increment_integral(h)
    else:
        # sin^2(y) <= y^{2 gamma} and int x^{1+2g-2H}/(1+x^2) = pi / (2 sin(pi (H-g)))
        moment = math.pi / (2.0 * math.sin(math.pi * (h - gamma)))
        upper = 4.0 * c_h * lam * alpha ** (2 * gamma - 2 * h) * (nu * lag / 2.0) ** (2 * gamma) * moment

    lower = None
    if window is not None:
        if not window > 0:
            raise ValueError("window must be positive")
        if lag > 2.0 * window:
            raise ValueError(f"lag {lag} does not fit inside [-{window}, {window}]")
        b = 2.0 * window * nu * alpha
        inner = b ** (-2 * h) * (cosine_integral(h, 0.0) - cosine_integral(h, b))
        lower = 2.0 * c_h * lam * (nu * lag) ** (2 * h) * inner
    return StructureBounds(lower, upper)


# --------------------------------------------------------------------------
# Covariance matrix and exact sampling

@lru_cache(maxsize=64)
def _unit_row(alpha: float, nu: float, h: float, dt: float, n: int) -> np.ndarray:
    unit = FouParams(alpha, 1.0, nu, h)
    row = np.array([fou_covariance(unit, j * dt) for j in range(n)])
    row.setflags(write=False)
    return row


def fou_covariance_row(params: FouParams, grid: TimeGrid) -> np.ndarray:
    """First row of the Toeplitz covariance matrix (n quadratures)."""
    return params.lam * _unit_row(params.alpha, params.nu, params.h, float(grid.dt), int(grid.n))


def fou_covariance_matrix(params: FouParams, grid: TimeGrid) -> np.ndarray:
    return linalg.toeplitz(fou_covariance_row(params, grid))


@lru_cache(maxsize=6)
def _unit_factor(alpha: float, nu: float, h: float, dt: float, n: int) -> tuple[np.ndarray, float]:
    row = _unit_row(alpha, nu, h, dt, n)
    var = row[0]
    for jitter in (0.0,) + JITTER_LADDER:
        cov = linalg.toeplitz(row)
        if jitter:
            cov[np.diag_indices(n)] += jitter * var
        try:
            factor = linalg.cholesky(cov, lower=True, overwrite_a=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        factor.setflags(write=False)
        return factor, jitter
    raise FactorizationError(
        f"covariance matrix for alpha={alpha}, nu={nu}, H={h}, dt={dt}, n={n} "
        f"is not factorizable with jitter up to {JITTER_LADDER[-1]:g}*Var"
    )


def cholesky_factor(params: FouParams, grid: TimeGrid) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of the unit-lambda covariance and the jitter used."""
    if grid.n > CHOLESKY_CAP:
        raise GridTooLargeError(
            f"grid of {grid.n} points exceeds the exact-sampling cap of {CHOLESKY_CAP}; "
            "use a coarser or shorter grid (no approximate sampler is provided)"
        )
    return _unit_factor(params.alpha, params.nu, params.h, float(grid.dt), int(grid.n))


def sample_real_fou(
    params: FouParams, grid: TimeGrid, variance_scale: float, rng: np.random.Generator
) -> RealFouPath:
    """Exact stationary path: ``L @ xi * sqrt(variance_scale * lam)``."""
    if variance_scale not in (1.0, 0.5):
        raise ValueError(f"variance_scale must be 1 or 1/2, got {variance_scale}")
    factor, jitter = cholesky_factor(params, grid)
    xi = rng.standard_normal(grid.n)
    values = factor @ xi * math.sqrt(variance_scale * params.lam)
    return RealFouPath(grid, values, params, variance_scale, jitter)


def sample_complex_coeff_pair(
    params: FouParams, grid: TimeGrid, rng_re: np.random.Generator, rng_im: np.random.Generator
) -> tuple[RealFouPath, RealFouPath]:
    """Real and imaginary parts of one complex coefficient, each with half the variance."""
    return (
        sample_real_fou(params, grid, 0.5, rng_re),
        sample_real_fou(params, grid, 0.5, rng_im),
    )
