"""Command-line driver: ``fouflow {sample-fou,simulate,pullback,diagnose}``.

Every command writes its data files plus ``config.resolved`` into the
output directory and exits with status 0 only if every pass/fail row it
produced passed.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import rng as rng_mod
from .attractor import (
    absorbing_radius,
    nesting_distances,
    pullback_snapshot,
    tail_steps,
)
from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .diagnostics import (
    dispersion_index,
    energy_spectrum_estimate,
    ensemble_seeds,
    structure_function_time,
    velocity_autocovariance_analytic,
    velocity_autocovariance_mc,
)
from .field import c1_norm_series, save_field, synthesize
from .fou import CHOLESKY_CAP, FouParams, TimeGrid, cholesky_factor, fou_covariance, fou_variance
from .particles import SimConfig, integrate, integrate_tracer, save_trajectory
from .svg import scatter_svg

log = logging.getLogger("fouflow")

OUT_ENV = "FOUFLOW_OUT"
TABLE_HEADER = ["quantity", "analytic", "estimate", "band", "pass"]


class Table:
    """Rows of ``quantity,analytic,estimate,band,pass``; ``pass`` is true/false/na."""

    def __init__(self):
        self.rows: list[list[str]] = []

    def add(self, quantity, analytic, estimate, band, passed):
        flag = "na" if passed is None else ("true" if passed else "false")
        self.rows.append([quantity, _fmt(analytic), _fmt(estimate), _fmt(band), flag])

    @property
    def ok(self) -> bool:
        return all(r[4] != "false" for r in self.rows)

    def write(self, path: Path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TABLE_HEADER)
            writer.writerows(self.rows)


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    return repr(float(value))


def _tau_tag(tau: float) -> str:
    return f"{tau:g}"


def write_scatter(path: Path, x: np.ndarray, y: np.ndarray):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["particle_id", "x1", "x2", "y1", "y2"])
        for i, (p, q) in enumerate(zip(x, y)):
            writer.writerow([i, repr(float(p[0])), repr(float(p[1])), repr(float(q[0])), repr(float(q[1]))])


def _initial_positions(cfg: ExperimentConfig) -> np.ndarray:
    gen = rng_mod.stream(cfg.seed, "initial-positions")
    return gen.uniform(0.0, 1.0, (cfg.particles.count, 2))


# --------------------------------------------------------------------------
# Commands

def cmd_sample_fou(cfg: ExperimentConfig, out: Path, threads: int = 1) -> bool:
    """Sample ``fou.paths`` exact paths per alpha; compare variance and lag-1 covariance."""
    grid = TimeGrid(0.0, cfg.fou.dt, cfg.fou.n_points)
    table = Table()
    all_paths = []
    for i, alpha in enumerate(cfg.fou.alpha):
        params = FouParams(float(alpha), cfg.fou.lam, cfg.nu, cfg.h)
        gen = rng_mod.stream(cfg.seed, "sample-fou", i)
        xi = gen.standard_normal((cfg.fou.paths, grid.n))
        if params.lam == 0:
            paths = np.zeros_like(xi)
        else:
            factor, _ = cholesky_factor(params, grid)
            paths = (xi @ factor.T) * math.sqrt(params.lam)
        all_paths.append(paths)
        var = fou_variance(params)
        y0 = paths[:, 0]
        sq = y0 * y0
        _compare(table, f"variance[alpha={alpha:g}]", var, sq)
        if grid.n > 1:
            _compare(table, f"covariance_lag1[alpha={alpha:g}]", fou_covariance(params, grid.dt), y0 * paths[:, 1])
    np.save(out / "fou_paths.npy", np.stack(all_paths), allow_pickle=False)
    table.write(out / "fou_summary.csv")
    return table.ok


def _compare(table: Table, name: str, analytic: float, samples: np.ndarray):
    est = float(samples.mean())
    band = 4 * float(samples.std(ddof=1)) / math.sqrt(len(samples))
    if band == 0:
        table.add(name, analytic, est, 0.0, est == analytic)
    else:
        table.add(name, analytic, est, band, abs(est - analytic) <= band)


def cmd_simulate(cfg: ExperimentConfig, out: Path, threads: int = 1) -> bool:
    grid = TimeGrid(0.0, cfg.time.dt_field, cfg.n_field)
    field = synthesize(cfg.spectrum_config(), cfg.nu, grid, cfg.seed, threads=threads)
    save_field(field, out / "field.bin")
    x0 = _initial_positions(cfg)
    n_steps = (grid.n - 1) // 2
    table = Table()
    index = {}
    for tau in cfg.tau:
        sim = SimConfig(tau, grid.dt, n_steps, stride=cfg.outputs.stride, scheme=cfg.particles.scheme)
        log.info("integrating %d particles, tau=%g, %d steps", len(x0), tau, n_steps)
        if tau == 0:
            traj = integrate_tracer(field, sim, x0, threads=threads)
        else:
            traj = integrate(field, sim, x0, np.zeros_like(x0), threads=threads)
        tag = _tau_tag(tau)
        save_trajectory(traj, out / f"trajectory_tau={tag}.bin", extra={"seed": cfg.seed})
        write_scatter(out / f"scatter_tau={tag}.csv", traj.final_x, traj.final_y)
        if cfg.outputs.plot:
            (out / f"scatter_tau={tag}.svg").write_text(scatter_svg(traj.final_x, f"tau = {tag}"), encoding="utf-8")
        if len(x0):
            stats = dispersion_index(traj.final_x, 10)
            index[tau] = stats.dispersion_index
            table.add(f"dispersion_index[tau={tag}]", 1.0, stats.dispersion_index, "", None)
    mid = [index[t] for t in index if 0.1 <= t <= 1.0]
    extreme = [index[t] for t in index if t < 1e-2 or t > 10.0]
    if mid and extreme:
        table.add("clustering_order[min(mid tau) > max(extreme tau)]", max(extreme), min(mid), 0.0,
                  min(mid) > max(extreme))
    table.write(out / "clustering.csv")
    return table.ok


def pullback_depths(cfg: ExperimentConfig) -> list[int]:
    """Particle-step depths for T/2, T and 2T."""
    h = 2 * cfg.time.dt_field
    return [max(1, int(round(d / h))) for d in (cfg.time.T_pullback / 2, cfg.time.T_pullback, 2 * cfg.time.T_pullback)]


def cmd_pullback(cfg: ExperimentConfig, out: Path, threads: int = 1) -> bool:
    tau = cfg.attractor.tau
    depths = pullback_depths(cfg)
    n_tail = tail_steps(tau, cfg.time.dt_field, cfg.time.eps_tail)
    end = 2 * depths[-1] + n_tail + 2
    end += end % 2
    grid = TimeGrid(0.0, cfg.time.dt_field, end + 1)
    if grid.n > CHOLESKY_CAP:
        raise ConfigError(f"pullback needs {grid.n} field points, above the exact-sampling cap")
    field = synthesize(cfg.spectrum_config(), cfg.nu, grid, cfg.seed, threads=threads)
    save_field(field, out / "field.bin")
    m = cfg.attractor.c1_resolution
    c1_sq = c1_norm_series(field, m) ** 2
    radius = absorbing_radius(field, tau, cfg.delta, end, cfg.time.eps_tail, m, c1_sq)
    clouds = []
    for depth in depths:
        cloud = pullback_snapshot(field, tau, cfg.delta, end, depth, cfg.attractor.samples, cfg.seed,
                                  m=m, threads=threads, c1_sq=c1_sq, eps=cfg.time.eps_tail)
        clouds.append(cloud)
        write_scatter(out / f"cloud_depth={cloud.pullback_time:g}.csv", cloud.x, cloud.y)
    table = Table()
    table.add("absorbing_radius[t=0]", radius.r, radius.r, radius.tail_error, None)
    for cloud in clouds:
        worst = float(np.max(np.linalg.norm(cloud.y, axis=1))) if len(cloud.y) else 0.0
        table.add(f"max_speed[depth={cloud.pullback_time:g}]", radius.r, worst, radius.r * 1e-6,
                  worst <= radius.r * (1 + 1e-6))
    dists = nesting_distances(clouds)
    for i, d in enumerate(dists):
        table.add(f"semidistance[{clouds[i].pullback_time:g}->{clouds[i + 1].pullback_time:g}]", "", d, "", None)
    decreasing = all(b < a or (a == 0 and b == 0) for a, b in zip(dists, dists[1:]))
    table.add("nesting_monotone", "", float(decreasing), "", decreasing)
    table.write(out / "nesting.csv")
    return table.ok


def cmd_diagnose(cfg: ExperimentConfig, out: Path, threads: int = 1) -> bool:
    spec = cfg.spectrum_config()
    d = cfg.diagnose
    lags = sorted(set(int(j) for j in d.lags))
    n = max(lags + [d.cov_lag, 0]) + 1
    grid = TimeGrid(0.0, d.lag_dt, n)

    sf = structure_function_time(spec, cfg.nu, grid, d.probe, lags, d.ensemble,
                                 rng_mod.derive_seed(cfg.seed, "structure"), threads)
    table = Table()
    for lag, est, band, exact, upper in zip(sf.lags, sf.estimate, sf.band, sf.analytic, sf.upper):
        table.add(f"structure[lag={lag:g}]", exact, est, band, abs(est - exact) <= band)
        table.add(f"structure_upper[lag={lag:g}]", upper, est, band, est <= upper + band)
    if sf.fit is not None:
        table.add("structure_slope", 2 * cfg.h, sf.fit.slope, 0.15, abs(sf.fit.slope - 2 * cfg.h) <= 0.15)
    table.write(out / "structure_function.csv")

    spec_table = Table()
    members = [synthesize(spec, cfg.nu, TimeGrid(0.0, 1.0, 1), s, threads)
               for s in ensemble_seeds(rng_mod.derive_seed(cfg.seed, "spectrum"), d.spectrum_ensemble)]
    est = energy_spectrum_estimate(members)
    for z, m_, b, a in zip(est.z, est.measured, est.band, est.analytic):
        spec_table.add(f"mode_energy[z=({z[0]},{z[1]})]", a, m_, b, abs(m_ - a) <= b)
    if est.fit is not None and spec.kind == "kolmogorov":
        spec_table.add("shell_slope", -5.0 / 3.0, est.fit.slope, 0.1, abs(est.fit.slope + 5.0 / 3.0) <= 0.1)
    spec_table.write(out / "spectrum.csv")

    cov_table = Table()
    probe = np.asarray(d.probe, dtype=float)
    other = (probe - np.asarray(d.displacement, dtype=float)) % 1.0
    lag_time = d.cov_lag * d.lag_dt
    analytic = velocity_autocovariance_analytic(spec, cfg.nu, probe - other, lag_time)
    mc, band = velocity_autocovariance_mc(spec, cfg.nu, grid, probe, other, d.cov_lag, d.ensemble,
                                          rng_mod.derive_seed(cfg.seed, "covariance"), threads)
    for i in range(2):
        for j in range(2):
            cov_table.add(f"R[{i}{j}]", analytic[i, j], mc[i, j], band[i, j],
                          abs(mc[i, j] - analytic[i, j]) <= band[i, j])
    cov_table.write(out / "covariance.csv")
    return table.ok and spec_table.ok and cov_table.ok


COMMANDS = {
    "sample-fou": cmd_sample_fou,
    "simulate": cmd_simulate,
    "pullback": cmd_pullback,
    "diagnose": cmd_diagnose,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fouflow", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="key = value configuration file")
        p.add_argument("--out", type=Path, help=f"output directory (overrides ${OUT_ENV} and the config)")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_out(args, cfg: ExperimentConfig) -> Path:
    if args.out is not None:
        return args.out
    env = os.environ.get(OUT_ENV)
    return Path(env) if env else Path(cfg.outputs.directory)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed)
    except (ConfigError, OSError) as exc:
        print(f"fouflow: config error: {exc}", file=sys.stderr)
        return 2
    out = resolve_out(args, cfg)
    cfg = replace(cfg, outputs=replace(cfg.outputs, directory=str(out)))
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(dump_config(cfg), encoding="utf-8")
    threads = max(1, args.threads)
    try:
        ok = COMMANDS[args.command](cfg, out, threads)
    except ConfigError as exc:
        print(f"fouflow: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
