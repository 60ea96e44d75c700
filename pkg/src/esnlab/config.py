"""Run configuration: nested sections, YAML/JSON file plus flag overrides.

Flags win over the file, the file wins over the defaults. Unknown keys are
rejected so that a typo cannot silently fall back to a default.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigurationError


@dataclass
class DynamicsSection:
    system: str = "lorenz63"
    dt: float = 0.1
    h: float = 0.01
    burn_in: float = 100.0
    t: float = 500.0
    components: list | None = None
    normalize: bool = True
    seed: int = 0


@dataclass
class EsnSection:
    N: int = 500
    s: float = 1.0
    gA2: float = 1e-2
    nsin2: float = 1.0
    ridge_k: float = 1e-2
    warmup_steps: int = 1000
    train_lt: float = 200.0
    task: str = "full"
    component: int = 1
    seed: int = 0


@dataclass
class AnalysisSection:
    threshold: float = 0.5
    horizon_lt: float = 15.0
    rank_tol: float = 1e-10
    mc_T: int = 5000
    mc_tau_max: int | None = None
    mc_ridge: float = 1e-8
    fixed_point_threshold: float = 1e-3
    bif_transient: int = 2000
    bif_horizon: int = 2000
    bif_k: list = field(default_factory=lambda: [1.0, 1e-2, 1e-4])
    bif_gA2: float = 1e-2
    bif_ladder: list = field(default_factory=lambda: [1e-6, 1e1, 22])


@dataclass
class LyapunovSection:
    steps: int = 2000
    warmup: int = 500
    tol: float = 0.01
    max_steps: int = 100_000
    ode_t_total: float = 2000.0
    ode_transient: float = 100.0


@dataclass
class SweepSection:
    N: int = 200
    trials: int = 10
    gA2_range: list = field(default_factory=lambda: [1e-6, 1e2, 12])
    nsin2_range: list = field(default_factory=lambda: [1e-5, 1e2, 12])
    metrics: list = field(default_factory=lambda: ["valid_time", "lambda_mf", "rank"])
    architecture: str = "random"
    base_seed: int = 0
    workers: int | None = None
    rank_level: float = 100.0


@dataclass
class RunConfig:
    dynamics: DynamicsSection = field(default_factory=DynamicsSection)
    esn: EsnSection = field(default_factory=EsnSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)
    lyapunov: LyapunovSection = field(default_factory=LyapunovSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def with_overrides(self, overrides: dict) -> "RunConfig":
        """Apply {'section.key': value} overrides; None values are skipped."""
        data = self.to_dict()
        for dotted, value in overrides.items():
            if value is None:
                continue
            section, _, key = dotted.partition(".")
            if section not in data or key not in data[section]:
                raise ConfigurationError(f"unknown config key {dotted!r}")
            data[section][key] = value
        return from_dict(data)


_SECTIONS = {
    "dynamics": DynamicsSection,
    "esn": EsnSection,
    "analysis": AnalysisSection,
    "lyapunov": LyapunovSection,
    "sweep": SweepSection,
}


def from_dict(data: dict) -> RunConfig:
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown config sections {sorted(unknown)}")
    sections = {}
    for name, cls in _SECTIONS.items():
        values = data.get(name) or {}
        if not isinstance(values, dict):
            raise ConfigurationError(f"section {name!r} must be a mapping")
        known = {f.name for f in dataclasses.fields(cls)}
        bad = set(values) - known
        if bad:
            raise ConfigurationError(f"unknown keys in [{name}]: {sorted(bad)}")
        sections[name] = cls(**values)
    return RunConfig(**sections)


def load(path=None) -> RunConfig:
    """Defaults, updated by a YAML (or JSON) file if given."""
    if path is None:
        return RunConfig()
    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return from_dict(data)
