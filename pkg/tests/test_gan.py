import math

import numpy as np
import pytest

from hgan_tsa.errors import DivergenceError, ShapeError
from hgan_tsa.gan import (
    Discriminator,
    GanConfig,
    GanLevel,
    Generator,
    LevelBatch,
    generator_loss,
    train_level_step,
    with_sample,
)
from hgan_tsa.nn.gradcheck import grad_check, numerical_gradient, relative_error

SMALL = GanConfig(channels=2, hidden_size=3, gru_layers=2, trunk_size=3)


def _gen_loss(gen, cond, w1, w2):
    def loss():
        x_hat, p, _ = gen.forward(cond)
        return float(np.sum(x_hat * w1) + np.sum(p * w2))
    return loss


def test_generator_shapes(rng):
    gen = Generator(GanConfig(channels=4), rng)
    x_hat, p, _ = gen.forward(rng.uniform(size=(5, 3, 4)))
    assert x_hat.shape == (5, 4) and p.shape == (5,)
    assert np.all((x_hat > 0) & (x_hat < 1)) and np.all((p > 0) & (p < 1))
    with pytest.raises(ShapeError):
        gen.forward(np.zeros((5, 3, 3)))
    with pytest.raises(ShapeError):
        gen.forward(np.zeros((5, 0, 4)))


def test_generator_gradients(rng):
    gen = Generator(SMALL, rng)
    cond = rng.uniform(size=(3, 2, 2))
    w1, w2 = rng.normal(size=(3, 2)), rng.normal(size=3)
    _, _, tape = gen.forward(cond)
    grads, d_cond = gen.backward(tape, w1, w2)
    loss = _gen_loss(gen, cond, w1, w2)
    rep = grad_check(loss, gen.named_params(), grads)
    assert rep.passed, rep
    assert relative_error(d_cond, numerical_gradient(loss, cond)).max() < 1e-4


def test_discriminator_gradients(rng):
    disc = Discriminator(SMALL, rng)
    seq = rng.uniform(size=(3, 3, 2))
    w = rng.normal(size=3)

    def loss():
        return float(np.sum(disc.forward(seq)[0] * w))

    _, tape = disc.forward(seq)
    grads, d_seq = disc.backward(tape, w)
    rep = grad_check(loss, disc.named_params(), grads)
    assert rep.passed, rep
    assert relative_error(d_seq, numerical_gradient(loss, seq)).max() < 1e-4


def test_generator_loss_components(rng):
    d = rng.uniform(0.05, 0.95, 8)
    x_hat, x = rng.uniform(size=(8, 3)), rng.uniform(size=(8, 3))
    p, y = rng.uniform(0.05, 0.95, 8), rng.integers(0, 2, 8)
    parts, g_d, g_x, g_p = generator_loss(d, x_hat, x, p, y)
    adv = np.mean(np.log(1 - d))
    se = np.mean((x_hat - x) ** 2)
    ce = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    assert parts.adversarial == pytest.approx(adv, abs=1e-12)
    assert parts.squared_error == pytest.approx(se, abs=1e-12)
    assert parts.cross_entropy == pytest.approx(ce, abs=1e-12)
    assert parts.total == pytest.approx(adv + se + ce, abs=1e-12)
    np.testing.assert_allclose(g_d, numerical_gradient(
        lambda: generator_loss(d, x_hat, x, p, y)[0].total, d), atol=1e-8)


def test_with_sample_appends_step(rng):
    cond = rng.uniform(size=(2, 3, 4))
    s = rng.uniform(size=(2, 4))
    out = with_sample(cond, s)
    assert out.shape == (2, 4, 4) and np.array_equal(out[:, -1], s)


def _batch(rng, b=6, k=1, c=2):
    return LevelBatch(rng.uniform(size=(b, k, c)), rng.uniform(size=(b, c)),
                      rng.integers(0, 2, b))


def test_train_step_metrics_and_updates(rng):
    level = GanLevel(1, SMALL, rng)
    before = {k: v.copy() for k, v in level.named_params().items()}
    m = train_level_step(level, _batch(rng), 0.1, 0.1)
    for key in ("cross_entropy", "squared_error", "adversarial", "generator_loss",
                "discriminator_loss", "d_real", "d_fake"):
        assert math.isfinite(m[key])
    after = level.named_params()
    assert all(not np.array_equal(before[k], after[k]) for k in ("gen.pred.W", "disc.head.W"))


def test_zero_learning_rates_freeze_each_side(rng):
    level = GanLevel(1, SMALL, rng)
    gen0 = {k: v.copy() for k, v in level.generator.named_params().items()}
    train_level_step(level, _batch(rng), 0.0, 0.1)
    for k, v in level.generator.named_params().items():
        assert np.array_equal(v, gen0[k])
    disc0 = {k: v.copy() for k, v in level.discriminator.named_params().items()}
    train_level_step(level, _batch(rng), 0.1, 0.0)
    for k, v in level.discriminator.named_params().items():
        assert np.array_equal(v, disc0[k])


def test_generator_step_uses_updated_discriminator(rng):
    # replaying the step by hand with the post-update discriminator gives the
    # same generator parameters
    level = GanLevel(1, SMALL, np.random.default_rng(0))
    twin = GanLevel(1, SMALL, np.random.default_rng(0))
    batch = _batch(rng)
    train_level_step(level, batch, 0.05, 0.05)
    train_level_step(twin, batch, 0.0, 0.05)  # discriminator only
    gen, disc = twin.generator, twin.discriminator
    x_hat, p, gtape = gen.forward(batch.condition)
    d_fake, ftape = disc.forward(with_sample(batch.condition, x_hat))
    _, g_d, g_x, g_p = generator_loss(d_fake, x_hat, batch.target_next, p, batch.labels)
    _, d_seq = disc.backward(ftape, g_d)
    grads, _ = gen.backward(gtape, g_x + d_seq[:, -1], g_p)
    from hgan_tsa.nn.optim import clip_by_global_norm
    grads = clip_by_global_norm(grads, SMALL.clip_norm)
    for k, v in gen.named_params().items():
        np.testing.assert_allclose(level.generator.named_params()[k], v - 0.05 * grads[k],
                                   atol=1e-14)


def test_divergence_raised(rng):
    level = GanLevel(1, SMALL, rng)
    b = _batch(rng)
    level.generator.pred.params["W"][:] = np.nan
    with pytest.raises(DivergenceError):
        train_level_step(level, b, 0.1, 0.1)


def test_batch_shape_check(rng):
    with pytest.raises(ShapeError):
        LevelBatch(np.zeros((3, 1, 2)), np.zeros((3, 3)), np.zeros(3))
