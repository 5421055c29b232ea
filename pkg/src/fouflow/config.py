"""Experiment configuration in flat ``key = value`` form.

Keys may carry one dotted section prefix (``spectrum.c0 = 0.01``). Values
are JSON literals; anything that does not parse as JSON is taken as a bare
string. ``#`` starts a comment. Unknown keys are errors, because a typo in
a stochastic experiment silently changes its meaning.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .fou import CHOLESKY_CAP, FouParams
from .spectrum import SpectrumConfig

__all__ = ["ConfigError", "ExperimentConfig", "parse_config_text", "load_config", "dump_config"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SpectrumSection:
    kind: str = "kolmogorov"
    c0: float = 0.01
    R: int = 2
    p: float | None = None
    table: list = field(default_factory=list)


@dataclass(frozen=True)
class TimeSection:
    dt_field: float = 0.1
    T_total: float = 500.0
    T_pullback: float = 2.0
    eps_tail: float = 1e-8


@dataclass(frozen=True)
class ParticlesSection:
    count: int = 2000
    init: str = "uniform-zero-velocity"
    scheme: str = "auto"


@dataclass(frozen=True)
class OutputsSection:
    directory: str = "out"
    stride: int = 10
    plot: bool = True


@dataclass(frozen=True)
class AttractorSection:
    tau: float = 1.0
    samples: int = 2000
    c1_resolution: int = 64


@dataclass(frozen=True)
class FouSection:
    alpha: list = field(default_factory=lambda: [1.0, 39.47841760435743])
    lam: float = 1.0
    dt: float = 0.1
    n_points: int = 64
    paths: int = 2000


@dataclass(frozen=True)
class DiagnoseSection:
    ensemble: int = 2000
    lag_dt: float = 3e-4
    lags: list = field(default_factory=lambda: [1, 2, 5, 10, 20, 50, 100])
    probe: list = field(default_factory=lambda: [0.3, 0.7])
    spectrum_ensemble: int = 2000
    displacement: list = field(default_factory=lambda: [0.1, 0.25])
    cov_lag: int = 10


SECTIONS = {
    "spectrum": SpectrumSection,
    "time": TimeSection,
    "particles": ParticlesSection,
    "outputs": OutputsSection,
    "attractor": AttractorSection,
    "fou": FouSection,
    "diagnose": DiagnoseSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 20240901
    h: float = 1.0 / 3.0
    nu: float = 0.01
    tau: list = field(default_factory=lambda: [1e-4, 0.1, 1.0, 100.0])
    delta: float = 0.1
    spectrum: SpectrumSection = field(default_factory=SpectrumSection)
    time: TimeSection = field(default_factory=TimeSection)
    particles: ParticlesSection = field(default_factory=ParticlesSection)
    outputs: OutputsSection = field(default_factory=OutputsSection)
    attractor: AttractorSection = field(default_factory=AttractorSection)
    fou: FouSection = field(default_factory=FouSection)
    diagnose: DiagnoseSection = field(default_factory=DiagnoseSection)

    def spectrum_config(self) -> SpectrumConfig:
        s = self.spectrum
        return SpectrumConfig(
            kind=s.kind, c0=s.c0, cutoff_R=s.R, h=self.h, p=s.p,
            table=tuple(tuple(e) for e in s.table),
        )

    @property
    def n_field(self) -> int:
        """Field grid points covering ``T_total`` (rounded up to an even step count)."""
        steps = int(math.ceil(self.time.T_total / self.time.dt_field - 1e-9))
        steps += steps % 2
        return steps + 1

    def validate(self) -> "ExperimentConfig":
        try:
            if not 0 <= self.seed < 2 ** 64 or int(self.seed) != self.seed:
                raise ConfigError("seed must be a 64-bit non-negative integer")
            if not self.tau or any(not t >= 0 for t in self.tau):
                raise ConfigError("tau must be a non-empty list of non-negative numbers")
            if not self.delta > 0:
                raise ConfigError("delta must be positive")
            self.spectrum_config()
            FouParams(1.0, 1.0, self.nu, self.h)
            if not self.time.dt_field > 0 or not self.time.T_total > 0:
                raise ConfigError("time.dt_field and time.T_total must be positive")
            if self.n_field > CHOLESKY_CAP:
                raise ConfigError(
                    f"T_total/dt_field gives {self.n_field} field points, above the exact-sampling cap {CHOLESKY_CAP}"
                )
            if self.particles.init != "uniform-zero-velocity":
                raise ConfigError("particles.init supports only 'uniform-zero-velocity'")
            if self.particles.count < 0 or self.outputs.stride < 1:
                raise ConfigError("particles.count must be >= 0 and outputs.stride >= 1")
            if self.attractor.tau <= 0 or self.attractor.samples < 1:
                raise ConfigError("attractor.tau must be positive and attractor.samples >= 1")
            for alpha in self.fou.alpha:
                FouParams(float(alpha), self.fou.lam, self.nu, self.h)
            if self.fou.n_points > CHOLESKY_CAP or self.fou.paths < 2:
                raise ConfigError("fou.n_points must respect the cap and fou.paths must be >= 2")
            if self.diagnose.ensemble < 2 or self.diagnose.spectrum_ensemble < 2:
                raise ConfigError("ensembles need at least 2 members")
            if any(int(j) != j or j < 0 for j in self.diagnose.lags):
                raise ConfigError("diagnose.lags are non-negative grid offsets")
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        return self


def _strip_comment(line: str) -> str:
    """Drop a ``#`` comment unless the ``#`` sits inside a double-quoted string."""
    quoted = escaped = False
    for i, ch in enumerate(line):
        if escaped:
            escaped = False
        elif ch == "\\" and quoted:
            escaped = True
        elif ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return line[:i]
    return line


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _coerce(value, default, key):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} expects true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{key} expects an integer, got {value!r}")
        return value
    if isinstance(default, float) or default is None:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if default is None and value is None:
            return None
        raise ConfigError(f"{key} expects a number, got {value!r}")
    if isinstance(default, list):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = [value]
        if not isinstance(value, list):
            raise ConfigError(f"{key} expects a list, got {value!r}")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key} expects a string, got {value!r}")
        return value
    return value


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Apply ``key = value`` lines on top of ``base`` (defaults if omitted)."""
    cfg = base or ExperimentConfig()
    top: dict = {}
    sections: dict[str, dict] = {}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        value = _parse_value(value)
        if "." in key:
            section, name = key.split(".", 1)
            if section not in SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section {section!r}")
            current = getattr(cfg, section)
            names = {f.name for f in fields(current)}
            if name not in names:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            default = getattr(SECTIONS[section](), name)
            sections.setdefault(section, {})[name] = _coerce(value, default, key)
        else:
            names = {f.name for f in fields(cfg)} - set(SECTIONS)
            if key not in names:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            top[key] = _coerce(value, getattr(ExperimentConfig(), key), key)
    for section, updates in sections.items():
        top[section] = replace(getattr(cfg, section), **updates)
    return replace(cfg, **top).validate()


def load_config(path: str | Path | None, seed: int | None = None) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8") if path else ""
    cfg = parse_config_text(text)
    if seed is not None:
        cfg = replace(cfg, seed=int(seed)).validate()
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    """Every key with its resolved value, in a form ``parse_config_text`` accepts."""
    lines = []
    data = asdict(cfg)
    for key in sorted(k for k in data if k not in SECTIONS):
        lines.append(f"{key} = {json.dumps(data[key])}")
    for section in SECTIONS:
        for key in sorted(data[section]):
            lines.append(f"{section}.{key} = {json.dumps(data[section][key])}")
    return "\n".join(lines) + "\n"
