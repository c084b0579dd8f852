"""Delimited-text tables and per-figure series files.

Every file is comma-separated with one header row. Floats are written with
``repr`` so reruns on the same inputs give identical bytes.

    accuracy.csv          model, accuracy              (per level + ensemble)
    confusion.csv         model, tp, tn, fp, fn, total, accuracy
    baseline.csv          method, accuracy
    response_time.csv     seconds, cycles
    sweep_<axis>.csv      setting, level_1..level_N, ensemble, ensemble_min,
                          ensemble_max, error
    loss_level_<k>.csv    episode, split, cross_entropy, squared_error, accuracy
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class ReportInputs:
    evaluation: object = None
    baseline: dict = field(default_factory=dict)  # method -> accuracy
    sweeps: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)  # level -> metric records


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return " ".join(str(x) for x in v)
    return "" if v is None else str(v)


def _write(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_sweep(path, sweep):
    n = sweep.n_levels
    header = [sweep.axis] + [f"level_{k}" for k in range(1, n + 1)] + [
        "ensemble", "ensemble_min", "ensemble_max", "error"]
    rows = []
    for p in sweep.points:
        acc = list(p.per_level_accuracy) + [float("nan")] * (n - len(p.per_level_accuracy))
        rows.append([p.setting] + [float(a) for a in acc[:n]] +
                    [p.ensemble_accuracy, p.ensemble_min, p.ensemble_max, p.error])
    return _write(Path(path), header, rows)


def write_loss_curve(path, records):
    rows = [[r["episode"], r["split"], r["cross_entropy"], r["squared_error"], r.get("accuracy")]
            for r in records]
    return _write(Path(path), ["episode", "split", "cross_entropy", "squared_error", "accuracy"],
                  rows)


def emit_report(results: ReportInputs, directory) -> list:
    """Write every available table and series; returns the written paths."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    ev = results.evaluation
    if ev is not None:
        acc_rows = [[f"level_{k}", cm.accuracy] for k, cm in enumerate(ev.per_level, 1)]
        acc_rows.append(["ensemble", ev.ensemble.accuracy])
        written.append(_write(out / "accuracy.csv", ["model", "accuracy"], acc_rows))
        cms = [(f"level_{k}", cm) for k, cm in enumerate(ev.per_level, 1)]
        cms.append(("ensemble", ev.ensemble))
        written.append(_write(
            out / "confusion.csv", ["model", "tp", "tn", "fp", "fn", "total", "accuracy"],
            [[name, cm.true_positive, cm.true_negative, cm.false_positive, cm.false_negative,
              cm.total, cm.accuracy] for name, cm in cms]))
        written.append(_write(out / "response_time.csv", ["seconds", "cycles"],
                              [[ev.mean_response_time, ev.response_cycles]]))
    if results.baseline:
        written.append(_write(out / "baseline.csv", ["method", "accuracy"],
                              [[k, float(v)] for k, v in results.baseline.items()]))
    for sweep in results.sweeps:
        written.append(write_sweep(out / f"sweep_{sweep.axis}.csv", sweep))
    for k in sorted(results.metrics):
        written.append(write_loss_curve(out / f"loss_level_{k}.csv", results.metrics[k]))
    return written
