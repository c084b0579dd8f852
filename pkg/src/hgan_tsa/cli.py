"""Command-line entry point: generate, train, assess, evaluate, report.

Exit codes: 0 success, 1 other package error, 2 configuration error,
3 missing or malformed file, 4 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .config import RunConfig, load_run_config
from .errors import ConfigError, DivergenceError, FormatError, HganError, ImbalanceError
from .evaluation import (
    ConfusionMatrix,
    EvaluationResult,
    ReportInputs,
    SweepPoint,
    SweepReport,
    count_subsets,
    emit_report,
    evaluate,
    noise_sweep,
    placement_sweep,
    predict_many,
    train_tree,
)
from .grid.case import bundled_case, load_case
from .grid.dataset import ScenarioGrid, generate_dataset, load_dataset, save_dataset
from .hgan import assess, load_model, save_model, train_hgan

log = logging.getLogger("hgan_tsa")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4

RESULTS_FILE = "evaluation.json"


# --------------------------------------------------------------------- output

class Printer:
    def __init__(self, fmt, stream=None):
        self.fmt = fmt
        self.stream = stream or sys.stdout

    def emit(self, kind, record, text):
        if self.fmt == "records":
            self.stream.write(json.dumps({"kind": kind, **record}, sort_keys=True) + "\n")
        else:
            self.stream.write(text + "\n")


# -------------------------------------------------------------------- helpers

def _resolve_case(ref):
    p = Path(ref)
    if p.suffix in (".yaml", ".yml") or p.exists() or "/" in ref:
        return load_case(p)
    try:
        return bundled_case(ref)
    except FileNotFoundError as exc:
        raise FileNotFoundError(f"case not found: {ref}") from exc


def _need(value, what):
    if value is None:
        raise ConfigError(f"no {what} given (flag or config paths section)")
    return value


def _eta_histogram(etas, bins=10):
    counts, edges = np.histogram(etas, bins=bins, range=(-1.0, 1.0))
    return [{"low": float(lo), "high": float(hi), "count": int(c)}
            for lo, hi, c in zip(edges[:-1], edges[1:], counts)]


_SPLIT = re.compile(r"[,\s]+")


def parse_sample_file(path):
    """Per-unit voltage magnitudes, one value per PMU channel.

    Values are separated by commas or whitespace and may span lines; blank
    lines and ``#`` comments are ignored.
    """
    values = []
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        for token in _SPLIT.split(body):
            if not token:
                continue
            try:
                values.append(float(token))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: cannot parse {token!r} as a number") from None
    if not values:
        raise FormatError(f"{path}: no values found")
    return np.array(values)


# ------------------------------------------------------------ serialization

def _cm_from(d):
    return ConfusionMatrix(d["tp"], d["tn"], d["fp"], d["fn"])


def results_to_dict(inputs: ReportInputs):
    ev = inputs.evaluation
    out = {"baseline": dict(inputs.baseline), "sweeps": [], "evaluation": None}
    if ev is not None:
        out["evaluation"] = {
            "per_level": [cm.to_dict() for cm in ev.per_level],
            "ensemble": ev.ensemble.to_dict(),
            "mean_response_time": ev.mean_response_time,
            "response_cycles": ev.response_cycles,
            "probabilities": ev.probabilities.tolist(),
            "predictions": ev.predictions.tolist(),
        }
    for s in inputs.sweeps:
        out["sweeps"].append({
            "axis": s.axis, "n_levels": s.n_levels, "seeds": list(s.seeds),
            "points": [{**asdict(p), "setting": list(p.setting) if isinstance(p.setting, tuple)
                        else p.setting} for p in s.points],
        })
    return out


def results_from_dict(d, metrics=None) -> ReportInputs:
    ev = None
    if d.get("evaluation"):
        e = d["evaluation"]
        ev = EvaluationResult([_cm_from(c) for c in e["per_level"]], _cm_from(e["ensemble"]),
                              e["mean_response_time"], e["response_cycles"],
                              np.array(e["probabilities"]), np.array(e["predictions"]))
    sweeps = []
    for s in d.get("sweeps", []):
        pts = []
        for p in s["points"]:
            p = dict(p)
            if isinstance(p["setting"], list):
                p["setting"] = tuple(p["setting"])
            pts.append(SweepPoint(**p))
        sweeps.append(SweepReport(s["axis"], s["n_levels"], pts, s.get("seeds", [])))
    return ReportInputs(ev, dict(d.get("baseline", {})), sweeps, metrics or {})


# --------------------------------------------------------------- subcommands

def cmd_generate(args, cfg: RunConfig, out: Printer):
    case = _resolve_case(args.case or cfg.case)
    overrides = dict(cfg.dataset)
    for key in ("stable", "unstable"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    grid = ScenarioGrid.from_case(case, **overrides)
    target = Path(_need(args.out or cfg.paths.dataset, "output directory"))
    ds = generate_dataset(grid, seed=cfg.seed, jobs=cfg.jobs)
    save_dataset(ds, target)
    counts = ds.class_counts()
    hist = _eta_histogram([s.eta for s in ds.samples])
    out.emit("generate", {"directory": str(target), "samples": len(ds),
                          "class_counts": counts,
                          "splits": {k: len(ds.indices(k)) for k in ("train", "test")},
                          "eta_histogram": hist},
             f"wrote {len(ds)} samples to {target}: {counts['stable']} stable, "
             f"{counts['unstable']} unstable, {len(ds.indices('train'))} train / "
             f"{len(ds.indices('test'))} test")
    if out.fmt == "text":
        for b in hist:
            out.emit("", {}, f"  eta [{b['low']:+.1f}, {b['high']:+.1f}) {b['count']}")
    return EXIT_OK


def _train_config(args, cfg: RunConfig):
    train = cfg.train
    flags = {"n_levels": args.levels, "episodes": args.episodes, "lr_g": args.lr_g,
             "lr_d": args.lr_d, "batch_size": args.batch_size}
    flags = {k: v for k, v in flags.items() if v is not None}
    return replace(train, **flags) if flags else train


def cmd_train(args, cfg: RunConfig, out: Printer):
    ds = load_dataset(_need(args.dataset or cfg.paths.dataset, "dataset directory"))
    target = Path(_need(args.out or cfg.paths.model, "output directory"))
    hcfg = _train_config(args, cfg)
    resume = load_model(args.resume_from) if args.resume_from else None
    start = args.start_level
    if resume is not None and start is None:
        start = len(resume.levels) + 1
    if resume is not None and resume.seed != cfg.seed:
        log.warning("resume model seed %d differs from run seed %d", resume.seed, cfg.seed)
    model = train_hgan(ds, hcfg, seed=cfg.seed, checkpoint_dir=target, resume=resume,
                       start_level=start or 1)
    save_model(model, target)
    for k in sorted(model.metrics):
        recs = [r for r in model.metrics[k] if r["split"] == "train"]
        last = recs[-1] if recs else {}
        out.emit("level", {"level": k, "episode": last.get("episode"),
                           "cross_entropy": last.get("cross_entropy"),
                           "squared_error": last.get("squared_error")},
                 f"level {k}: episode {last.get('episode')} cross-entropy "
                 f"{last.get('cross_entropy', float('nan')):.4g} squared error "
                 f"{last.get('squared_error', float('nan')):.4g}")
    out.emit("train", {"directory": str(target), "levels": model.n_levels},
             f"model bundle written to {target}")
    return EXIT_OK


def cmd_assess(args, cfg: RunConfig, out: Printer):
    model = load_model(_need(args.model or cfg.paths.model, "model directory"))
    x = parse_sample_file(args.sample)
    if x.size != len(model.channels):
        raise ConfigError(f"sample file {args.sample} has {x.size} channels, model expects "
                          f"{len(model.channels)} (PMU buses {[c + 1 for c in model.channels]})")
    v = assess(x, model)
    d = v.to_dict()
    text = (f"verdict: {d['verdict']}\n"
            f"per-level p_stable: {' '.join(f'{p:.4f}' for p in d['per_level_probabilities'])}\n"
            f"per-level votes: {' '.join(str(k) for k in d['per_level_votes'])}\n"
            f"elapsed: {d['elapsed']:.6f} s")
    out.emit("verdict", d, text)
    return EXIT_OK


def _noise_seeds(root, n):
    return [int(s) for s in np.random.SeedSequence([root, 3]).generate_state(n)]


def cmd_evaluate(args, cfg: RunConfig, out: Printer):
    ecfg = cfg.evaluate
    if args.snr is not None:
        ecfg = replace(ecfg, snr_db=[float(s) for s in args.snr])
    if args.pmu_counts is not None:
        ecfg = replace(ecfg, pmu_counts=[int(c) for c in args.pmu_counts])
    if args.pmu_subset:
        ecfg = replace(ecfg, pmu_subsets=[[int(b) for b in s.split(",")] for s in args.pmu_subset])
    if args.no_baseline:
        ecfg = replace(ecfg, baseline=False)

    model = load_model(_need(args.model or cfg.paths.model, "model directory"))
    ds = load_dataset(_need(args.dataset or cfg.paths.dataset, "dataset directory"))
    target = Path(_need(args.out or cfg.paths.report, "output directory"))
    if list(ds.channels) != list(model.channels):
        raise ConfigError(f"dataset PMU buses {[c + 1 for c in ds.channels]} differ from model "
                          f"PMU buses {[c + 1 for c in model.channels]}")

    result = evaluate(model, ds, "test")
    inputs = ReportInputs(result, {}, [], model.metrics)
    if ecfg.baseline:
        tr, te = ds.indices("train"), ds.indices("test")
        xt = np.stack([ds.samples[i].measured for i in tr])
        tree = train_tree(xt, ds.labels[tr], max_depth=ecfg.tree_max_depth)
        xe = np.stack([ds.samples[i].measured for i in te])
        acc = float(np.mean(predict_many(tree, xe) == ds.labels[te]))
        inputs.baseline = {"decision_tree": acc, "hgan_ensemble": result.ensemble.accuracy}
    if ecfg.snr_db:
        inputs.sweeps.append(noise_sweep(model, ds, ecfg.snr_db,
                                         _noise_seeds(cfg.seed, ecfg.noise_seeds)))

    def factory(part):
        hc = model.config
        if ecfg.retrain_episodes is not None:
            hc = replace(hc, episodes=ecfg.retrain_episodes)
        return train_hgan(part, hc, seed=cfg.seed)

    bus_pos = {b + 1: p for p, b in enumerate(ds.channels)}
    if ecfg.pmu_subsets:
        subsets = []
        for sub in ecfg.pmu_subsets:
            missing = [b for b in sub if b not in bus_pos]
            if missing:
                raise ConfigError(f"PMU buses {missing} are not measured in the dataset")
            subsets.append([bus_pos[b] for b in sub])
        inputs.sweeps.append(placement_sweep(factory, ds, subsets, n_levels=model.n_levels))
    if ecfg.pmu_counts:
        bad = [c for c in ecfg.pmu_counts if not 1 <= c <= len(ds.channels)]
        if bad:
            raise ConfigError(f"PMU counts {bad} outside 1..{len(ds.channels)}")
        inputs.sweeps.append(placement_sweep(factory, ds, count_subsets(len(ds.channels),
                                                                       ecfg.pmu_counts),
                                             axis="pmu_count", n_levels=model.n_levels))

    target.mkdir(parents=True, exist_ok=True)
    (target / RESULTS_FILE).write_text(json.dumps(results_to_dict(inputs), indent=1,
                                                  sort_keys=True) + "\n")
    written = emit_report(inputs, target)
    failed = sum(p.error is not None for s in inputs.sweeps for p in s.points)
    out.emit("evaluate", {"directory": str(target),
                          "per_level_accuracy": result.per_level_accuracy,
                          "ensemble_accuracy": result.ensemble.accuracy,
                          "mean_response_time": result.mean_response_time,
                          "response_cycles": result.response_cycles,
                          "baseline": inputs.baseline, "failed_points": failed,
                          "files": [p.name for p in written]},
             f"per-level accuracy: {' '.join(f'{a:.4f}' for a in result.per_level_accuracy)}\n"
             f"ensemble accuracy: {result.ensemble.accuracy:.4f}\n"
             f"response time: {result.mean_response_time:.6f} s "
             f"({result.response_cycles:.3f} cycles)\n"
             + (f"decision tree accuracy: {inputs.baseline['decision_tree']:.4f}\n"
                if inputs.baseline else "")
             + (f"{failed} sweep point(s) failed, see error column\n" if failed else "")
             + f"report written to {target}")
    return EXIT_OK


def cmd_report(args, cfg: RunConfig, out: Printer):
    source = Path(_need(args.results, "evaluation directory"))
    rfile = source / RESULTS_FILE if source.is_dir() else source
    if not rfile.is_file():
        raise FileNotFoundError(f"evaluation results not found: {rfile}")
    try:
        doc = json.loads(rfile.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{rfile}: {exc}") from exc
    metrics = load_model(args.model).metrics if args.model else {}
    target = Path(_need(args.out or cfg.paths.report, "output directory"))
    written = emit_report(results_from_dict(doc, metrics), target)
    out.emit("report", {"directory": str(target), "files": [p.name for p in written]},
             f"wrote {len(written)} files to {target}")
    return EXIT_OK


# -------------------------------------------------------------------- parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="root seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, help="worker processes for simulation")
    common.add_argument("--format", choices=("text", "records"), default="text",
                        help="human text or one JSON record per line")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hgan-tsa",
                                description="Hierarchical GAN transient stability assessment")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="simulate a labeled dataset")
    g.add_argument("--case", help="bundled case name or case file path")
    g.add_argument("--stable", type=int, help="stable samples to keep")
    g.add_argument("--unstable", type=int, help="unstable samples to keep")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", parents=[common], help="train the stacked GAN levels")
    t.add_argument("--dataset", help="dataset directory")
    t.add_argument("--levels", type=int, help="number of GAN levels")
    t.add_argument("--episodes", type=int, help="training episodes per level")
    t.add_argument("--lr-g", type=float, dest="lr_g", help="generator learning rate")
    t.add_argument("--lr-d", type=float, dest="lr_d", help="discriminator learning rate")
    t.add_argument("--batch-size", type=int, dest="batch_size")
    t.add_argument("--resume-from", dest="resume_from", help="model bundle to resume")
    t.add_argument("--start-level", type=int, dest="start_level",
                   help="first level to retrain when resuming (default: next untrained)")
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("assess", parents=[common], help="assess one measured sample")
    a.add_argument("sample", help="text file with one voltage magnitude per PMU channel")
    a.add_argument("--model", help="model bundle directory")
    a.set_defaults(func=cmd_assess)

    e = sub.add_parser("evaluate", parents=[common], help="evaluate on the test split")
    e.add_argument("--model", help="model bundle directory")
    e.add_argument("--dataset", help="dataset directory")
    e.add_argument("--snr", nargs="+", help="noise sweep SNR values in dB (inf allowed)")
    e.add_argument("--pmu-subset", action="append", dest="pmu_subset",
                   help="comma-separated 1-based buses; repeat for several subsets")
    e.add_argument("--pmu-counts", nargs="+", dest="pmu_counts", help="PMU counts to sweep")
    e.add_argument("--no-baseline", action="store_true", dest="no_baseline")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", parents=[common], help="rewrite report files from results")
    r.add_argument("results", help="evaluation directory or evaluation.json")
    r.add_argument("--model", help="model bundle whose loss logs to include")
    r.set_defaults(func=cmd_report)
    return p


def _merge(args) -> RunConfig:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    return cfg


def main(argv=None, stdout=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Printer(args.format, stdout)
    try:
        cfg = _merge(args)
        return args.func(args, cfg, out)
    except (ConfigError, ImbalanceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (HganError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
