"""Run configuration shared by the command-line subcommands.

A YAML file may hold any of these top-level keys::

    seed: 2024
    jobs: 1
    case: wscc9               # bundled case name or path to a case file
    dataset: {...}            # overrides for the case file's dataset block
    train: {...}              # HganConfig fields
    evaluate:
      snr_db: [50, 60, 70, 80]
      noise_seeds: 3
      pmu_subsets: [[4, 7, 9]]    # 1-based buses
      pmu_counts: [3, 6, 9]
      baseline: true
      tree_max_depth: 12
      retrain_episodes: null      # episodes for placement-sweep retraining
    paths: {dataset: ..., model: ..., report: ...}

Values given on the command line override the file; the file overrides the
defaults. Unknown keys anywhere are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .hgan import HganConfig


def _reject_unknown(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass
class EvaluateConfig:
    snr_db: list = field(default_factory=list)
    noise_seeds: int = 3
    pmu_subsets: list = field(default_factory=list)
    pmu_counts: list = field(default_factory=list)
    baseline: bool = True
    tree_max_depth: int = 12
    retrain_episodes: int | None = None

    def __post_init__(self):
        if self.noise_seeds < 1:
            raise ConfigError("noise_seeds must be >= 1")
        self.snr_db = [float(s) for s in self.snr_db]
        self.pmu_subsets = [[int(b) for b in sub] for sub in self.pmu_subsets]
        self.pmu_counts = [int(c) for c in self.pmu_counts]


@dataclass
class PathsConfig:
    dataset: str | None = None
    model: str | None = None
    report: str | None = None


@dataclass
class RunConfig:
    seed: int = 0
    jobs: int = 1
    case: str = "wscc9"
    dataset: dict = field(default_factory=dict)
    train: HganConfig = field(default_factory=HganConfig)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    @classmethod
    def from_dict(cls, d) -> "RunConfig":
        d = dict(d or {})
        _reject_unknown(d, [f.name for f in fields(cls)], "config")
        cfg = cls()
        for key in ("seed", "jobs"):
            if key in d:
                setattr(cfg, key, int(d[key]))
        if "case" in d:
            cfg.case = str(d["case"])
        if "dataset" in d:
            if not isinstance(d["dataset"] or {}, dict):
                raise ConfigError("dataset must be a mapping")
            # keys are checked against the scenario grid when it is built
            cfg.dataset = dict(d["dataset"] or {})
        if "train" in d:
            cfg.train = HganConfig.from_dict(d["train"] or {})
        if "evaluate" in d:
            ev = d["evaluate"] or {}
            _reject_unknown(ev, [f.name for f in fields(EvaluateConfig)], "evaluate")
            cfg.evaluate = EvaluateConfig(**ev)
        if "paths" in d:
            p = d["paths"] or {}
            _reject_unknown(p, [f.name for f in fields(PathsConfig)], "paths")
            cfg.paths = PathsConfig(**p)
        return cfg


def load_run_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        doc = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return RunConfig.from_dict(doc)
