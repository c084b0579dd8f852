"""Stacked GAN levels: sequential training, rollout and ensemble assessment.

Model bundle layout (version 1)::

    <dir>/manifest.json            format, version, n_levels, channels,
                                   normalization {min, max}, config, seed, levels
    <dir>/level_<k>.bin            generator + discriminator parameters
    <dir>/metrics_level_<k>.jsonl  one JSON record per logged episode and split
"""

from __future__ import annotations

import json
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, NotReadyError
from .gan import GanConfig, GanLevel, LevelBatch, train_level_step
from .nn.losses import bce_loss, mse_loss
from .nn.serialize import assign_params, load_params, params_to_bytes

log = logging.getLogger(__name__)

MODEL_FORMAT = "hgan-tsa-model"
MODEL_VERSION = 1
POLICIES = ("majority", "average")


@dataclass
class HganConfig:
    n_levels: int = 3
    episodes: int = 20000
    lr_g: float = 1e-3
    lr_d: float = 1e-4
    gru_layers: int = 2
    hidden_size: int = 30
    trunk_size: int = 30
    batch_size: int = 128
    clip_norm: float = 5.0
    non_saturating: bool = False
    ensemble_policy: str = "majority"
    vote_threshold: float = 0.5
    convergence_window: int = 200
    convergence_tol: float = 1e-4
    log_every: int = 50

    def __post_init__(self):
        if self.n_levels < 1:
            raise ConfigError("n_levels must be >= 1")
        if self.ensemble_policy not in POLICIES:
            raise ConfigError(f"ensemble_policy must be one of {POLICIES}")
        if self.batch_size < 1 or self.episodes < 0:
            raise ConfigError("batch_size must be >= 1 and episodes >= 0")
        if self.lr_g < 0 or self.lr_d < 0:
            raise ConfigError("learning rates must be >= 0")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def gan_config(self, channels) -> GanConfig:
        return GanConfig(channels=channels, hidden_size=self.hidden_size,
                         gru_layers=self.gru_layers, trunk_size=self.trunk_size,
                         clip_norm=self.clip_norm, non_saturating=self.non_saturating)


@dataclass
class Normalization:
    minimum: np.ndarray
    maximum: np.ndarray

    @classmethod
    def fit(cls, values):
        """Per-channel min/max over every row of ``values`` (..., channels)."""
        v = np.asarray(values, dtype=float).reshape(-1, np.shape(values)[-1])
        if v.shape[0] == 0:
            raise ConfigError("cannot fit normalization on an empty training split")
        lo, hi = v.min(axis=0), v.max(axis=0)
        flat = np.flatnonzero(hi == lo)
        if flat.size:
            warnings.warn(f"constant channels {flat.tolist()} mapped to 0.5", stacklevel=2)
        return cls(lo, hi)

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        span = self.maximum - self.minimum
        safe = np.where(span == 0, 1.0, span)
        out = (x - self.minimum) / safe
        return np.where(span == 0, 0.5, out)

    def invert(self, z):
        z = np.asarray(z, dtype=float)
        span = self.maximum - self.minimum
        return np.where(span == 0, self.minimum, self.minimum + z * span)

    def to_dict(self):
        return {"min": self.minimum.tolist(), "max": self.maximum.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["min"], dtype=float), np.array(d["max"], dtype=float))


@dataclass
class NormalizedData:
    x_train: np.ndarray  # (S, rows, channels), normalized
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    normalization: Normalization
    channels: list = field(default_factory=list)


def normalize_dataset(dataset, rows: int) -> NormalizedData:
    """Min-max scale per channel using the training split only.

    ``rows`` frames from each measured sample are used (measured sample plus
    the targets of every level).
    """
    x_tr, y_tr = dataset.windows(rows, "train")
    x_te, y_te = dataset.windows(rows, "test")
    if x_tr.shape[0] == 0:
        raise ConfigError("training split is empty")
    norm = Normalization.fit(x_tr)
    return NormalizedData(norm.apply(x_tr), y_tr, norm.apply(x_te), y_te, norm,
                          list(dataset.channels))


@dataclass
class TsaVerdict:
    per_level_probabilities: np.ndarray
    per_level_votes: np.ndarray
    final_label: int
    predicted_sequence: np.ndarray  # (N + 1, channels), per-unit
    elapsed: float
    mean_probability: float

    def to_dict(self):
        return {
            "per_level_probabilities": [float(p) for p in self.per_level_probabilities],
            "per_level_votes": [int(v) for v in self.per_level_votes],
            "final_label": int(self.final_label),
            "verdict": "stable" if self.final_label == 1 else "unstable",
            "mean_probability": float(self.mean_probability),
            "predicted_sequence": [[float(v) for v in row] for row in self.predicted_sequence],
            "elapsed": float(self.elapsed),
        }


def majority_vote(votes) -> int:
    """1 iff strictly more than half of the votes are 1."""
    votes = np.asarray(votes)
    return int(2 * int(np.sum(votes == 1)) > votes.size)


def ensemble_decision(probabilities, policy="majority", threshold=0.5):
    """Final labels for probabilities of shape (..., levels)."""
    p = np.asarray(probabilities, dtype=float)
    if policy == "average":
        return (p.mean(axis=-1) > threshold).astype(int)
    votes = (p > threshold).astype(int)
    return (2 * votes.sum(axis=-1) > p.shape[-1]).astype(int)


class HganModel:
    def __init__(self, config: HganConfig, channels, normalization=None, seed=0):
        self.config = config
        self.channels = list(channels)
        self.normalization = normalization
        self.seed = seed
        self.levels: list[GanLevel] = []
        self.metrics: dict[int, list] = {}

    @property
    def n_levels(self):
        return self.config.n_levels

    @property
    def ready(self):
        return len(self.levels) == self.config.n_levels and self.normalization is not None

    def new_level(self, index) -> GanLevel:
        rng = np.random.default_rng([self.seed, 1, index])
        return GanLevel(index, self.config.gan_config(len(self.channels)), rng)

    def level_bytes(self, index) -> bytes:
        level = self.levels[index - 1]
        return params_to_bytes(level.named_params(), {"level": index})


def roll_forward(x_measured, model: HganModel, depth=None):
    """Measured sample followed by each level's prediction, all normalized.

    ``x_measured`` is (channels,) or (batch, channels); returns
    (depth + 1, channels) or (batch, depth + 1, channels).
    """
    depth = model.n_levels if depth is None else depth
    if depth > len(model.levels) or depth < 0:
        raise IndexError(f"depth {depth} outside 0..{len(model.levels)}")
    seq, _ = _rollout(x_measured, model.levels[:depth])
    return seq


def _rollout(x_measured, levels):
    x = np.asarray(x_measured, dtype=float)
    single = x.ndim == 1
    rows = [x[None] if single else x]
    probs = []
    for level in levels:
        cond = np.stack(rows, axis=1)
        x_hat, p = level.predict(cond)
        rows.append(x_hat)
        probs.append(p)
    seq = np.stack(rows, axis=1)
    probs = np.stack(probs, axis=1) if probs else np.zeros((seq.shape[0], 0))
    if single:
        return seq[0], probs[0]
    return seq, probs


def level_probabilities(x_measured_norm, model: HganModel):
    """p_stable of every level for normalized measured samples (batch, channels)."""
    return _rollout(x_measured_norm, model.levels)[1]


def assess(x_measured, model: HganModel, normalized=False) -> TsaVerdict:
    """Stability verdict from one measured post-clearing sample (per-unit unless ``normalized``)."""
    if not model.ready:
        raise NotReadyError("model is not trained")
    start = time.perf_counter()
    x = np.asarray(x_measured, dtype=float)
    if x.shape != (len(model.channels),):
        raise ConfigError(
            f"measured sample has {x.size} channels, model expects {len(model.channels)}"
        )
    z = x if normalized else model.normalization.apply(x)
    seq, probs = _rollout(z, model.levels)
    votes = (probs > model.config.vote_threshold).astype(int)
    final = int(ensemble_decision(probs, model.config.ensemble_policy,
                                  model.config.vote_threshold))
    out_seq = seq.copy() if normalized else model.normalization.invert(seq)
    out_seq[0] = x
    elapsed = time.perf_counter() - start
    return TsaVerdict(probs, votes, final, out_seq, elapsed, float(probs.mean()))


def _level_eval(level, cond, target, labels):
    x_hat, p = level.predict(cond)
    ce = bce_loss(p, labels.astype(float))[0]
    se = mse_loss(x_hat, target)[0]
    acc = float(np.mean((p > 0.5).astype(int) == labels))
    return {"cross_entropy": ce, "squared_error": se, "accuracy": acc}


def _converged(history, window, tol):
    """Compare the last two non-overlapping windows; checked once per window."""
    if window < 1 or len(history) < 2 * window or len(history) % window:
        return False
    prev = float(np.mean(history[-2 * window:-window]))
    last = float(np.mean(history[-window:]))
    return abs(last - prev) <= tol * max(abs(prev), 1e-12)


def train_level(model, level, data: NormalizedData, rng, on_log=None):
    """Train one level against conditions produced by the frozen lower levels."""
    cfg = model.config
    i = level.index
    lower = model.levels[: i - 1]
    cond_tr = _rollout(data.x_train[:, 0], lower)[0]
    cond_te = _rollout(data.x_test[:, 0], lower)[0] if data.x_test.shape[0] else None
    tgt_tr, y_tr = data.x_train[:, i], data.y_train
    n = cond_tr.shape[0]
    bs = min(cfg.batch_size, n)

    records = []

    def log_point(episode, step_metrics):
        rec = {"level": i, "episode": episode, "split": "train"}
        rec.update(_level_eval(level, cond_tr, tgt_tr, y_tr))
        if step_metrics:
            rec.update({k: step_metrics[k] for k in ("d_real", "d_fake", "adversarial")})
        records.append(rec)
        if cond_te is not None:
            rec_te = {"level": i, "episode": episode, "split": "test"}
            rec_te.update(_level_eval(level, cond_te, data.x_test[:, i], data.y_test))
            records.append(rec_te)
        if on_log:
            on_log(records[-2:] if cond_te is not None else records[-1:])

    log_point(0, None)
    ce_hist = []
    order, pos = rng.permutation(n), 0
    metrics = None
    for ep in range(1, cfg.episodes + 1):
        if pos + bs > n:
            order, pos = rng.permutation(n), 0
        idx = order[pos:pos + bs]
        pos += bs
        batch = LevelBatch(cond_tr[idx], tgt_tr[idx], y_tr[idx])
        metrics = train_level_step(level, batch, cfg.lr_g, cfg.lr_d)
        ce_hist.append(metrics["cross_entropy"])
        done = _converged(ce_hist, cfg.convergence_window, cfg.convergence_tol)
        if ep % cfg.log_every == 0 or ep == cfg.episodes or done:
            log_point(ep, metrics)
        if done:
            log.info("level %d converged at episode %d", i, ep)
            break
    return records


def train_hgan(dataset_or_data, config: HganConfig, seed=0, checkpoint_dir=None,
               resume=None, start_level=1, on_log=None) -> HganModel:
    """Train levels 1..N in order; lower levels are frozen while upper ones train.

    ``resume`` supplies an existing model whose levels below ``start_level``
    are reused byte-for-byte.
    """
    if isinstance(dataset_or_data, NormalizedData):
        data = dataset_or_data
    else:
        data = normalize_dataset(dataset_or_data, config.n_levels + 1)
    if data.x_train.shape[1] < config.n_levels + 1:
        raise ConfigError(f"data windows have {data.x_train.shape[1]} rows, "
                          f"{config.n_levels + 1} needed")
    model = HganModel(config, data.channels or list(range(data.x_train.shape[2])),
                      data.normalization, seed)
    if resume is not None and start_level > 1:
        if len(resume.levels) < start_level - 1:
            raise ConfigError(f"resume model has {len(resume.levels)} levels, "
                              f"cannot start at level {start_level}")
        model.levels = list(resume.levels[: start_level - 1])
        model.metrics = {k: v for k, v in resume.metrics.items() if k < start_level}
        model.normalization = resume.normalization
    for i in range(len(model.levels) + 1, config.n_levels + 1):
        level = model.new_level(i)
        rng = np.random.default_rng([seed, 2, i])
        model.metrics[i] = train_level(model, level, data, rng, on_log)
        model.levels.append(level)
        if checkpoint_dir is not None:
            save_model(model, checkpoint_dir)
        log.info("level %d trained", i)
    return model


def save_model(model: HganModel, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    levels = []
    for level in model.levels:
        k = level.index
        (directory / f"level_{k}.bin").write_bytes(model.level_bytes(k))
        lines = [json.dumps(r, sort_keys=True) for r in model.metrics.get(k, [])]
        (directory / f"metrics_level_{k}.jsonl").write_text(
            "".join(line + "\n" for line in lines))
        levels.append({"level": k, "checkpoint": f"level_{k}.bin",
                       "metrics": f"metrics_level_{k}.jsonl"})
    manifest = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "n_levels": model.n_levels,
        "channels": [int(c) + 1 for c in model.channels],
        "normalization": model.normalization.to_dict() if model.normalization else None,
        "config": asdict(model.config),
        "seed": model.seed,
        "levels": levels,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return directory


def load_model(directory) -> HganModel:
    directory = Path(directory)
    mpath = directory / "manifest.json"
    if not mpath.is_file():
        raise FileNotFoundError(f"model manifest not found: {mpath}")
    manifest = json.loads(mpath.read_text())
    if manifest.get("format") != MODEL_FORMAT:
        raise FormatError(f"{mpath}: not a {MODEL_FORMAT} manifest")
    if manifest.get("version") != MODEL_VERSION:
        raise FormatError(f"{mpath}: unsupported model version {manifest.get('version')}")
    config = HganConfig.from_dict(manifest["config"])
    norm = manifest.get("normalization")
    model = HganModel(config, [c - 1 for c in manifest["channels"]],
                      Normalization.from_dict(norm) if norm else None, manifest.get("seed", 0))
    for entry in manifest["levels"]:
        k = entry["level"]
        level = model.new_level(k)
        params, _ = load_params(directory / entry["checkpoint"])
        assign_params(level, params)
        model.levels.append(level)
        mfile = directory / entry.get("metrics", "")
        if entry.get("metrics") and mfile.is_file():
            model.metrics[k] = [json.loads(line) for line in mfile.read_text().splitlines() if line]
    return model
