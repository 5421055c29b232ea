import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fouflow.field import (
    AliasingError,
    FieldPath,
    c1_norm,
    eval_grid_fft,
    eval_stream_and_gradient,
    eval_velocity,
    load_field,
    save_field,
    synthesize,
)
from fouflow.fou import TimeGrid
from fouflow.spectrum import SpectrumConfig, mode_energy, mode_set

from conftest import zero_field


def single_mode_field(z=(0, 1), c=0.3 + 0j, r=1):
    spec = SpectrumConfig(cutoff_R=r)
    zs = [m.z for m in mode_set(spec).positive]
    coeffs = np.zeros((len(zs), 1), dtype=complex)
    coeffs[zs.index(z), 0] = c
    return FieldPath(spec, 0.01, TimeGrid(0, 1, 1), coeffs, 0)


def full_lattice_velocity(field, x, j):
    """Complex sum over both halves of the lattice."""
    v = np.zeros(2, dtype=complex)
    for (z1, z2), c in zip(field.z, field.coeffs[:, j]):
        for sign, coef in ((1, c), (-1, np.conj(c))):
            k1, k2 = 2 * math.pi * sign * z1, 2 * math.pi * sign * z2
            v += 1j * np.array([k2, -k1]) * coef * np.exp(1j * (k1 * x[0] + k2 * x[1]))
    return v


def test_zero_field_evaluations():
    f = zero_field()
    assert not eval_velocity(f, [0.3, 0.2], 3).any()
    assert not eval_stream_and_gradient(f, [0.3, 0.2], 3).any()
    for arr in eval_grid_fft(f, 0, 8):
        assert not arr.any()
    assert c1_norm(f, 0, 8) == 0.0


def test_single_mode_hand_expansion():
    c = 0.3
    f = single_mode_field(c=c + 0j)
    for x in np.random.default_rng(0).uniform(0, 1, (20, 2)):
        v = eval_velocity(f, x, 0)
        assert v[0] == pytest.approx(-4 * math.pi * c * math.sin(2 * math.pi * x[1]), abs=1e-14)
        assert v[1] == pytest.approx(0.0, abs=1e-14)
        assert np.allclose(full_lattice_velocity(f, x, 0).real, v, rtol=0, atol=1e-14)


def test_half_lattice_matches_full_complex_sum(small_field):
    pts = np.random.default_rng(1).uniform(0, 1, (25, 2))
    for j in (0, 7, 200):
        for x in pts:
            full = full_lattice_velocity(small_field, x, j)
            assert abs(full.imag).max() <= 1e-12
            assert np.allclose(full.real, eval_velocity(small_field, x, j), rtol=0, atol=1e-12)


def test_vectorized_matches_single_point(small_field):
    pts = np.random.default_rng(2).uniform(0, 1, (10, 2))
    batch = eval_velocity(small_field, pts, 4)
    for p, v in zip(pts, batch):
        assert np.array_equal(eval_velocity(small_field, p, 4), v)


def test_index_out_of_range(small_field):
    with pytest.raises(IndexError):
        eval_velocity(small_field, [0.1, 0.1], small_field.grid.n)
    with pytest.raises(IndexError):
        eval_stream_and_gradient(small_field, [0.1, 0.1], -1)


def test_perp_gradient_identity(small_field):
    pts = np.random.default_rng(3).uniform(0, 1, (50, 2))
    g = eval_stream_and_gradient(small_field, pts, 9)
    v = eval_velocity(small_field, pts, 9)
    assert np.allclose(v[:, 0], g[:, 2], rtol=0, atol=1e-12)
    assert np.allclose(v[:, 1], -g[:, 1], rtol=0, atol=1e-12)


def test_gradient_against_finite_differences(small_field):
    h = 1e-5
    scale = np.abs(eval_grid_fft(small_field, 0, 32)[1]).max()
    for x in np.random.default_rng(4).uniform(0, 1, (10, 2)):
        _, d1, d2 = eval_stream_and_gradient(small_field, x, 0)
        fd1 = (eval_stream_and_gradient(small_field, x + [h, 0], 0)[0]
               - eval_stream_and_gradient(small_field, x - [h, 0], 0)[0]) / (2 * h)
        fd2 = (eval_stream_and_gradient(small_field, x + [0, h], 0)[0]
               - eval_stream_and_gradient(small_field, x - [0, h], 0)[0]) / (2 * h)
        assert abs(fd1 - d1) <= 1e-6 * scale
        assert abs(fd2 - d2) <= 1e-6 * scale


def test_fft_grid_matches_direct(small_field):
    n = 16
    psi, v1, v2, residue = eval_grid_fft(small_field, 3, n, return_residue=True)
    axis = np.arange(n) / n
    pts = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    direct_v = eval_velocity(small_field, pts, 3)
    direct_psi = eval_stream_and_gradient(small_field, pts, 3)[:, 0]
    vmax = np.abs(direct_v).max()
    assert np.abs(v1.ravel() - direct_v[:, 0]).max() <= 1e-10 * vmax
    assert np.abs(v2.ravel() - direct_v[:, 1]).max() <= 1e-10 * vmax
    assert np.abs(psi.ravel() - direct_psi).max() <= 1e-10 * np.abs(direct_psi).max()
    assert residue <= 1e-12 * vmax


def test_fft_aliasing_guard(small_field):
    with pytest.raises(AliasingError):
        eval_grid_fft(small_field, 0, 5)
    eval_grid_fft(small_field, 0, 6)


def _fd_divergence(field, n):
    _, v1, v2 = eval_grid_fft(field, 0, n)
    h = 1.0 / n
    div = (np.roll(v1, -1, 0) - np.roll(v1, 1, 0) + np.roll(v2, -1, 1) - np.roll(v2, 1, 1)) / (2 * h)
    return np.abs(div).max(), np.hypot(v1, v2).max()


def test_incompressibility(small_field):
    # at R = 2 every mode has k1 = 0, k2 = 0 or |k1| = |k2|, where centred
    # differences commute exactly, so only roundoff remains
    d64, vsup = _fd_divergence(small_field, 64)
    assert d64 <= 1e-3 * vsup


def test_divergence_converges_second_order():
    field = synthesize(SpectrumConfig(c0=0.01, cutoff_R=3), 0.01, TimeGrid(0, 0.1, 1), 8)
    d64, _ = _fd_divergence(field, 64)
    d128, _ = _fd_divergence(field, 128)
    assert 3.5 <= d64 / d128 <= 4.5


def test_c1_norm_single_mode():
    c = 0.25
    f = single_mode_field(c=c + 0j)
    exact = 2 * c * 2 * math.pi  # sup of sqrt(psi^2 + psi_2^2), psi = 2c cos(2 pi x2)
    assert c1_norm(f, 0, 64) == pytest.approx(exact, rel=1e-2)


def test_c1_norm_refinement_and_nesting(small_field):
    values = [c1_norm(small_field, 11, m) for m in (32, 64, 256)]
    assert values[0] <= values[1] * (1 + 1e-12) and values[1] <= values[2] * (1 + 1e-12)
    assert abs(values[0] - values[2]) < 0.02 * values[2]


def test_c1_norm_dominates_velocity(small_field):
    pts = np.random.default_rng(5).uniform(0, 1, (200, 2))
    speed = np.linalg.norm(eval_velocity(small_field, pts, 2), axis=1)
    assert speed.max() <= c1_norm(small_field, 2, 64) * (1 + 1e-3)


def test_synthesis_deterministic_and_thread_independent(kolmogorov_r2):
    grid = TimeGrid(0, 0.1, 30)
    a = synthesize(kolmogorov_r2, 0.01, grid, 17)
    b = synthesize(kolmogorov_r2, 0.01, grid, 17)
    c = synthesize(kolmogorov_r2, 0.01, grid, 17, threads=4)
    assert np.array_equal(a.coeffs, b.coeffs) and np.array_equal(a.coeffs, c.coeffs)
    assert a.digest() == c.digest()
    assert not np.array_equal(a.coeffs, synthesize(kolmogorov_r2, 0.01, grid, 18).coeffs)


def test_coefficients_are_read_only(small_field):
    with pytest.raises(ValueError):
        small_field.coeffs[0, 0] = 1.0


def test_serialization_round_trip(tmp_path, small_field):
    path = tmp_path / "f.bin"
    save_field(small_field, path)
    back = load_field(path)
    assert np.array_equal(back.coeffs, small_field.coeffs)
    assert back.metadata() == small_field.metadata()
    save_field(back, tmp_path / "g.bin")
    assert path.read_bytes() == (tmp_path / "g.bin").read_bytes()


def test_load_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"hello\n")
    with pytest.raises(ValueError):
        load_field(path)


@given(st.integers(0, 2**32), st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))
@settings(max_examples=25, deadline=None)
def test_velocity_is_periodic(seed, a, b):
    f = synthesize(SpectrumConfig(c0=0.01, cutoff_R=2), 0.01, TimeGrid(0, 0.1, 1), seed)
    v = eval_velocity(f, [a, b], 0)
    assert np.allclose(eval_velocity(f, [a + 1, b - 1], 0), v, rtol=0, atol=1e-12)


# ----------------------------------------------------------- Monte-Carlo checks

MC = 5000


@pytest.fixture(scope="module")
def one_point_ensemble():
    spec = SpectrumConfig(kind="kolmogorov", c0=0.01, cutoff_R=2, h=1 / 3)
    grid = TimeGrid(0, 0.1, 1)
    return spec, [synthesize(spec, 0.01, grid, 1000 + s) for s in range(MC)]


def test_real_part_variance(one_point_ensemble):
    spec, fields = one_point_ensemble
    re = np.array([f.coeffs[:, 0].real for f in fields])
    modes = mode_set(spec).positive
    for i, m in enumerate(modes):
        target = m.lambda_k * math.gamma(2 / 3) / 3 / (2 * m.alpha_k ** (2 / 3))
        sq = re[:, i] ** 2
        assert abs(sq.mean() - target) <= 4 * sq.std(ddof=1) / math.sqrt(MC)


def test_equal_time_velocity_covariance(one_point_ensemble):
    spec, fields = one_point_ensemble
    x, y = np.array([0.2, 0.6]), np.array([0.45, 0.1])
    prods = np.array([np.outer(eval_velocity(f, x, 0), eval_velocity(f, y, 0)) for f in fields])
    target = np.zeros((2, 2))
    for m in mode_set(spec):
        k1, k2 = m.k
        kp = np.array([k2, -k1])
        weight = m.lambda_k * m.k_norm ** (-4 / 3) * math.gamma(2 / 3) / 3
        target += np.outer(kp, kp) * weight * math.cos(k1 * (x[0] - y[0]) + k2 * (x[1] - y[1]))
    band = 4 * prods.std(axis=0, ddof=1) / math.sqrt(MC)
    assert np.all(np.abs(prods.mean(axis=0) - target) <= band)


def test_one_point_velocity_variance_trace(one_point_ensemble):
    spec, fields = one_point_ensemble
    sq = np.array([eval_velocity(f, [0.3, 0.3], 0) @ eval_velocity(f, [0.3, 0.3], 0) for f in fields])
    # |v|^2 averages to twice the summed per-mode energies over the full lattice
    target = 2 * sum(mode_energy(m, 1 / 3) for m in mode_set(spec))
    assert abs(sq.mean() - target) <= 4 * sq.std(ddof=1) / math.sqrt(MC)


def test_stationarity_of_one_point_variance(kolmogorov_r2):
    grid = TimeGrid(0, 0.5, 30)
    n = 1500
    first, last = [], []
    for s in range(n):
        f = synthesize(kolmogorov_r2, 0.01, grid, 50_000 + s)
        first.append(np.sum(eval_velocity(f, [0.7, 0.2], 0) ** 2))
        last.append(np.sum(eval_velocity(f, [0.7, 0.2], grid.n - 1) ** 2))
    first, last = np.array(first), np.array(last)
    diff = first.mean() - last.mean()
    band = 4 * math.sqrt(first.var(ddof=1) / n + last.var(ddof=1) / n)
    assert abs(diff) <= band
