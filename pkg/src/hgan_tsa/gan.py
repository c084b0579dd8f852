"""One hierarchy level: conditional generator, discriminator and a training step."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DivergenceError, ShapeError
from .nn.layers import Dense, GRUStack
from .nn.losses import adversarial_loss, bce_loss, discriminator_loss, mse_loss
from .nn.optim import SGD


@dataclass
class GanConfig:
    channels: int
    hidden_size: int = 30
    gru_layers: int = 2
    trunk_size: int = 30
    clip_norm: float = 5.0
    non_saturating: bool = False

    def to_dict(self):
        return asdict(self)


class _Composite:
    """Named-parameter plumbing shared by the generator and discriminator."""

    def _parts(self):
        raise NotImplementedError

    def named_params(self, prefix=""):
        out = {}
        for name, part in self._parts():
            out.update(part.named_params(f"{prefix}{name}."))
        return out

    def touch(self):
        for _, part in self._parts():
            part.touch()


class Generator(_Composite):
    """GRU stack -> tanh trunk -> (sigmoid next-sample head, 2-way softmax label head)."""

    def __init__(self, cfg: GanConfig, rng):
        self.channels = cfg.channels
        self.gru = GRUStack(cfg.channels, [cfg.hidden_size] * cfg.gru_layers, rng)
        self.trunk = Dense(cfg.hidden_size, cfg.trunk_size, "tanh", rng)
        self.pred = Dense(cfg.trunk_size, cfg.channels, "sigmoid", rng)
        self.label = Dense(cfg.trunk_size, 2, "softmax", rng)

    def _parts(self):
        return [("gru", self.gru), ("trunk", self.trunk), ("pred", self.pred),
                ("label", self.label)]

    def named_params(self, prefix=""):
        out = self.gru.named_params(prefix)
        for name, part in self._parts()[1:]:
            out.update(part.named_params(f"{prefix}{name}."))
        return out

    def forward(self, condition):
        """Return ``(x_hat_next, p_stable, tape)`` for condition (batch, k, channels)."""
        condition = np.asarray(condition, dtype=float)
        if condition.ndim != 3 or condition.shape[2] != self.channels or condition.shape[1] == 0:
            raise ShapeError(
                f"generator condition: expected (batch, k>=1, {self.channels}), got {condition.shape}"
            )
        hs, gtapes = self.gru.forward(condition)
        trunk, ttape = self.trunk.forward(hs[:, -1])
        x_hat, ptape = self.pred.forward(trunk)
        probs, ltape = self.label.forward(trunk)
        tape = (hs.shape, gtapes, ttape, ptape, ltape)
        return x_hat, probs[:, 1], tape

    def backward(self, tape, d_xhat, d_pstable):
        hs_shape, gtapes, ttape, ptape, ltape = tape
        grads = {}
        g, d_trunk = self.pred.backward(d_xhat, ptape)
        grads.update({f"pred.{k}": v for k, v in g.items()})
        d_probs = np.zeros((d_pstable.shape[0], 2))
        d_probs[:, 1] = d_pstable
        g, d_t2 = self.label.backward(d_probs, ltape)
        grads.update({f"label.{k}": v for k, v in g.items()})
        g, d_h = self.trunk.backward(d_trunk + d_t2, ttape)
        grads.update({f"trunk.{k}": v for k, v in g.items()})
        dhs = np.zeros(hs_shape)
        dhs[:, -1] = d_h
        g, d_cond = self.gru.backward(dhs, gtapes)
        grads.update(g)
        return grads, d_cond


class Discriminator(_Composite):
    """GRU stack -> linear score -> sigmoid probability that the last step is real."""

    def __init__(self, cfg: GanConfig, rng):
        self.channels = cfg.channels
        self.gru = GRUStack(cfg.channels, [cfg.hidden_size] * cfg.gru_layers, rng)
        self.head = Dense(cfg.hidden_size, 1, "sigmoid", rng)

    def _parts(self):
        return [("gru", self.gru), ("head", self.head)]

    def named_params(self, prefix=""):
        out = self.gru.named_params(prefix)
        out.update(self.head.named_params(f"{prefix}head."))
        return out

    def forward(self, sequence):
        sequence = np.asarray(sequence, dtype=float)
        if sequence.ndim != 3 or sequence.shape[2] != self.channels or sequence.shape[1] == 0:
            raise ShapeError(
                f"discriminator input: expected (batch, steps, {self.channels}), got {sequence.shape}"
            )
        hs, gtapes = self.gru.forward(sequence)
        prob, htape = self.head.forward(hs[:, -1])
        return prob[:, 0], (hs.shape, gtapes, htape)

    def backward(self, tape, d_prob):
        hs_shape, gtapes, htape = tape
        g, d_h = self.head.backward(d_prob[:, None], htape)
        grads = {f"head.{k}": v for k, v in g.items()}
        dhs = np.zeros(hs_shape)
        dhs[:, -1] = d_h
        g, d_seq = self.gru.backward(dhs, gtapes)
        grads.update(g)
        return grads, d_seq


def generator_forward(gen: Generator, condition):
    x_hat, p, _ = gen.forward(condition)
    return x_hat, p


def discriminator_forward(disc: Discriminator, sample_sequence):
    return disc.forward(sample_sequence)[0]


def with_sample(condition, sample):
    """Condition sequence with one more step appended (discriminator input)."""
    return np.concatenate([condition, sample[:, None, :]], axis=1)


@dataclass
class GeneratorLoss:
    total: float
    adversarial: float
    squared_error: float
    cross_entropy: float


def generator_loss(d_fake, x_hat, x_true, p_stable, y, non_saturating=False):
    """Composite generator objective and its gradients.

    total = ln(1 - D(x_hat)) + mse(x_hat, x) + bce(p, y). Returns
    ``(GeneratorLoss, d_dfake, d_xhat, d_p)``.
    """
    adv, g_adv = adversarial_loss(d_fake, non_saturating)
    se, g_se = mse_loss(x_hat, x_true)
    ce, g_ce = bce_loss(p_stable, np.asarray(y, dtype=float))
    return GeneratorLoss(adv + se + ce, adv, se, ce), g_adv, g_se, g_ce


@dataclass
class LevelBatch:
    condition: np.ndarray  # (batch, k, channels)
    target_next: np.ndarray  # (batch, channels)
    labels: np.ndarray  # (batch,)

    def __post_init__(self):
        b, _, c = self.condition.shape
        if self.target_next.shape != (b, c) or self.labels.shape != (b,):
            raise ShapeError("LevelBatch: condition, target_next and labels disagree")


class GanLevel:
    """Generator/discriminator pair for hierarchy level ``index`` (1-based)."""

    def __init__(self, index: int, cfg: GanConfig, rng):
        self.index = index
        self.config = cfg
        self.generator = Generator(cfg, rng)
        self.discriminator = Discriminator(cfg, rng)
        self.skipped_updates = 0
        self.last_metrics = None

    def named_params(self):
        out = self.generator.named_params("gen.")
        out.update(self.discriminator.named_params("disc."))
        return out

    def touch(self):
        self.generator.touch()
        self.discriminator.touch()

    def predict(self, condition):
        return generator_forward(self.generator, condition)


def train_level_step(level: GanLevel, batch: LevelBatch, lr_g: float, lr_d: float) -> dict:
    """One discriminator update on (real, fake), then one generator update.

    The generator step backpropagates through the just-updated discriminator,
    whose parameters are left untouched by that step.
    """
    cfg = level.config
    gen, disc = level.generator, level.discriminator
    cond, x_real, y = batch.condition, batch.target_next, batch.labels

    x_hat, p, _ = gen.forward(cond)
    d_real, rtape = disc.forward(with_sample(cond, x_real))
    d_fake, ftape = disc.forward(with_sample(cond, x_hat))
    d_loss, g_real, g_fake = discriminator_loss(d_real, d_fake)
    if not math.isfinite(d_loss):
        raise DivergenceError(f"level {level.index}: non-finite discriminator loss",
                              level.last_metrics)
    grads_r, _ = disc.backward(rtape, g_real)
    grads_f, _ = disc.backward(ftape, g_fake)
    d_grads = {k: grads_r[k] + grads_f[k] for k in grads_r}
    d_opt = SGD(lr_d, cfg.clip_norm)
    if not d_opt.step(disc, d_grads):
        level.skipped_updates += 1

    x_hat, p, gtape = gen.forward(cond)
    d_fake2, ftape2 = disc.forward(with_sample(cond, x_hat))
    parts, g_dfake, g_xhat, g_p = generator_loss(d_fake2, x_hat, x_real, p, y, cfg.non_saturating)
    if not math.isfinite(parts.total):
        raise DivergenceError(f"level {level.index}: non-finite generator loss",
                              level.last_metrics)
    _, d_seq = disc.backward(ftape2, g_dfake)
    g_grads, _ = gen.backward(gtape, g_xhat + d_seq[:, -1], g_p)
    g_opt = SGD(lr_g, cfg.clip_norm)
    if not g_opt.step(gen, g_grads):
        level.skipped_updates += 1

    metrics = {
        "cross_entropy": parts.cross_entropy,
        "squared_error": parts.squared_error,
        "adversarial": parts.adversarial,
        "generator_loss": parts.total,
        "discriminator_loss": d_loss,
        "d_real": float(np.mean(d_real)),
        "d_fake": float(np.mean(d_fake)),
    }
    level.last_metrics = metrics
    return metrics
