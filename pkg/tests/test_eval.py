import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgan_tsa.errors import ConfigError
from hgan_tsa.evaluation import (
    ConfusionMatrix,
    ReportInputs,
    SweepReport,
    count_subsets,
    emit_report,
    evaluate,
    evaluate_arrays,
    noise_sweep,
    placement_sweep,
    predict_many,
    train_tree,
)
from hgan_tsa.evaluation.tree import gini


def exhaustive_stump_accuracy(x, y):
    """Best training accuracy of any single threshold on any feature, either orientation."""
    best = max(np.mean(y == 0), np.mean(y == 1))
    for f in range(x.shape[1]):
        vals = np.unique(x[:, f])
        for t in np.concatenate([[vals[0] - 1], (vals[:-1] + vals[1:]) / 2]):
            left = x[:, f] <= t
            for a, b in ((0, 1), (1, 0)):
                pred = np.where(left, a, b)
                best = max(best, np.mean(pred == y))
    return best


# ------------------------------------------------------------------- confusion

@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=50))
def test_confusion_totals_and_accuracy(pairs):
    t = np.array([a for a, _ in pairs])
    p = np.array([b for _, b in pairs])
    cm = ConfusionMatrix.from_labels(t, p)
    assert cm.total == len(pairs)
    assert cm.accuracy == (cm.true_positive + cm.true_negative) / cm.total
    assert cm.accuracy == np.sum(t == p) / len(pairs)


def test_confusion_counts():
    cm = ConfusionMatrix.from_labels([1, 1, 0, 0, 1], [1, 0, 0, 1, 1])
    assert (cm.true_positive, cm.true_negative, cm.false_positive, cm.false_negative) == (2, 1, 1, 1)
    with pytest.raises(ValueError):
        ConfusionMatrix.from_labels([1], [1, 0])


# ------------------------------------------------------------------------ tree

def test_gini():
    assert gini((5, 5)) == 0.5
    assert gini((3, 0)) == 0.0


def test_tree_separable_perfect(rng):
    x = rng.normal(size=(200, 3))
    y = (x @ np.array([1.0, -2.0, 0.5]) > 0.1).astype(int)
    tree = train_tree(x, y)
    assert np.mean(predict_many(tree, x) == y) == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_tree_beats_stump_on_random(seed):
    r = np.random.default_rng(seed)
    x = r.normal(size=(40, 3)).round(1)
    y = r.integers(0, 2, 40)
    tree = train_tree(x, y)
    assert np.mean(predict_many(tree, x) == y) >= exhaustive_stump_accuracy(x, y)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_tree_row_order_invariant(seed):
    r = np.random.default_rng(seed)
    x = r.integers(0, 4, size=(30, 2)).astype(float)
    y = r.integers(0, 2, 30)
    perm = r.permutation(30)
    a, b = train_tree(x, y, max_depth=3), train_tree(x[perm], y[perm], max_depth=3)
    grid = np.array([[i, j] for i in range(-1, 5) for j in range(-1, 5)], float) + 0.25
    assert np.array_equal(predict_many(a, grid), predict_many(b, grid))


def test_tree_depth_limit(rng):
    x = rng.normal(size=(100, 2))
    y = rng.integers(0, 2, 100)
    assert train_tree(x, y, max_depth=2).max_depth() <= 2
    with pytest.raises(ValueError):
        train_tree(np.zeros((0, 2)), np.zeros(0))


# ------------------------------------------------------------------ evaluation

def test_evaluate_matches_assess(tiny_model, smib_dataset):
    res = evaluate(tiny_model, smib_dataset)
    assert res.ensemble.total == 4
    assert len(res.per_level) == 2
    assert res.probabilities.shape == (4, 2)
    assert res.mean_response_time > 0
    assert res.response_cycles == pytest.approx((res.mean_response_time + 1 / 120) * 60)
    with pytest.raises(ValueError):
        evaluate_arrays(tiny_model, np.zeros((0, 2)), np.zeros(0))


def test_noise_sweep_infinite_equals_clean(tiny_model, smib_dataset):
    clean = evaluate(tiny_model, smib_dataset)
    rep = noise_sweep(tiny_model, smib_dataset, [50.0, math.inf, 20.0], seeds=[0, 1, 2])
    assert [p.setting for p in rep.points] == [20.0, 50.0, math.inf]
    inf = rep.points[-1]
    assert inf.per_level_accuracy == clean.per_level_accuracy
    assert inf.ensemble_accuracy == clean.ensemble.accuracy
    assert inf.ensemble_min == inf.ensemble_max == clean.ensemble.accuracy


def test_noise_sweep_is_pure(tiny_model, smib_dataset):
    a = noise_sweep(tiny_model, smib_dataset, [10.0, 30.0], seeds=[4, 5, 6])
    b = noise_sweep(tiny_model, smib_dataset, [10.0, 30.0], seeds=[4, 5, 6])
    assert a == b


def test_placement_sweep(tiny_model, smib_dataset, tiny_config):
    from hgan_tsa.hgan import train_hgan
    calls = []

    def factory(part):
        calls.append(part.channels)
        if part.channels == [0]:
            raise RuntimeError("boom")
        return train_hgan(part, tiny_config, seed=1)

    rep = placement_sweep(factory, smib_dataset, [[0], [1], [0, 1]])
    assert calls == [[0], [1], [0, 1]]
    assert [p.setting for p in rep.points] == [(1,), (2,), (1, 2)]
    assert rep.points[0].error.startswith("RuntimeError")
    assert math.isnan(rep.points[0].ensemble_accuracy)
    assert rep.points[1].error is None and 0 <= rep.points[1].ensemble_accuracy <= 1
    with pytest.raises(ConfigError):
        placement_sweep(factory, smib_dataset, [[7]])


def test_count_subsets():
    assert count_subsets(4, [1, 3, 9]) == [[0], [0, 1, 2]]


# ---------------------------------------------------------------------- report

def _read(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_report_files(tiny_model, smib_dataset, tmp_path):
    res = evaluate(tiny_model, smib_dataset)
    sweep = noise_sweep(tiny_model, smib_dataset, [50.0, 60.0, 70.0, 80.0], seeds=[0, 1, 2])
    inputs = ReportInputs(res, {"decision_tree": 0.75}, [sweep, SweepReport("pmu_count", 2)],
                          tiny_model.metrics)
    written = emit_report(inputs, tmp_path / "a")
    names = sorted(p.name for p in written)
    assert names == ["accuracy.csv", "baseline.csv", "confusion.csv", "loss_level_1.csv",
                     "loss_level_2.csv", "response_time.csv", "sweep_pmu_count.csv",
                     "sweep_snr_db.csv"]
    acc = _read(tmp_path / "a/accuracy.csv")
    assert acc[0] == ["model", "accuracy"] and [r[0] for r in acc[1:]] == ["level_1", "level_2",
                                                                           "ensemble"]
    assert float(acc[-1][1]) == res.ensemble.accuracy
    snr = _read(tmp_path / "a/sweep_snr_db.csv")
    assert snr[0][:4] == ["snr_db", "level_1", "level_2", "ensemble"]
    assert len(snr) == 5
    assert len(_read(tmp_path / "a/sweep_pmu_count.csv")) == 1  # header only
    loss = _read(tmp_path / "a/loss_level_1.csv")
    assert len(loss) - 1 == len(tiny_model.metrics[1])
    emit_report(inputs, tmp_path / "b")
    for p in written:
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


def test_report_without_sweeps(tiny_model, smib_dataset, tmp_path):
    res = evaluate(tiny_model, smib_dataset)
    written = emit_report(ReportInputs(res), tmp_path)
    assert sorted(p.name for p in written) == ["accuracy.csv", "confusion.csv",
                                               "response_time.csv"]


@given(st.integers(1, 200), st.integers(0, 200), st.integers(1, 6))
def test_aggregate_of_identical_runs_is_exact(total, correct, copies):
    from hgan_tsa.evaluation import EvaluationResult
    from hgan_tsa.evaluation.sweeps import _aggregate
    correct = min(correct, total)
    cm = ConfusionMatrix(correct, 0, total - correct, 0)
    run = EvaluationResult([cm, cm], cm, 0.0, 0.0, np.zeros((total, 2)), np.zeros(total))
    point = _aggregate(1.0, [run] * copies)
    assert point.ensemble_accuracy == cm.accuracy
    assert point.per_level_accuracy == [cm.accuracy, cm.accuracy]
