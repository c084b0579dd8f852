"""Balanced transient datasets: scenario grids, generation and on-disk format.

On-disk layout (version 1)::

    <dir>/manifest.json
    <dir>/samples/<id>.v.f64     voltages, (frames, channels)
    <dir>/samples/<id>.a.f64     rotor angles in degrees, (frames, machines)

Matrix files are raw little-endian IEEE-754 float64, row-major, no header;
their shapes are given by ``frames`` in the record and by ``channels`` and
``machine_count`` in the manifest. ``channels`` lists 1-based bus numbers.
The manifest is UTF-8 JSON written with ``indent=1`` and ``sort_keys=True``.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import ConfigError, FormatError, ImbalanceError
from .case import CaseData
from .dynamics import ScenarioSpec, TransientSample, integrate_transient
from .network import FaultSpec, build_system

log = logging.getLogger(__name__)

DATASET_FORMAT = "hgan-tsa-dataset"
DATASET_VERSION = 1
TRAIN, TEST = "train", "test"


@dataclass
class ScenarioGrid:
    case: CaseData
    loading_factors: list = field(default_factory=lambda: [1.0])
    faults: list = field(default_factory=list)
    fault_start: float = 0.1
    time_step: float = 1e-3
    horizon: float = 2.0
    sample_rate: float = 120.0
    pmu_buses: tuple = ()
    stable: int = 10
    unstable: int = 10
    durations_per_side: int = 3
    duration_spread: float = 0.6
    max_duration_cycles: float = 60.0
    min_duration_cycles: float = 0.5
    train_fraction: float = 0.8
    seed: int = 0

    @classmethod
    def from_case(cls, case: CaseData, **overrides) -> "ScenarioGrid":
        """Grid described by the case file's ``dataset`` block."""
        d = dict(case.extra.get("dataset") or {})
        d.update({k: v for k, v in overrides.items() if v is not None})
        known = {"loading_factors", "fault_buses", "fault_lines", "line_positions",
                 "fault_start", "time_step", "horizon", "sample_rate", "pmu_buses",
                 "stable", "unstable", "durations_per_side", "duration_spread",
                 "max_duration_cycles", "min_duration_cycles", "train_fraction", "seed"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown dataset keys: {sorted(unknown)}")
        faults = [FaultSpec("bus", int(b) - 1) for b in d.get("fault_buses", [])]
        for ln in d.get("fault_lines", []):
            if not 1 <= int(ln) <= len(case.branches):
                raise ConfigError(f"fault line {ln} outside 1..{len(case.branches)}")
            for pos in d.get("line_positions", [0.5]):
                faults.append(FaultSpec("line", int(ln) - 1, float(pos)))
        if not faults:
            raise ConfigError("scenario grid defines no faults")
        pmu = d.get("pmu_buses") or list(range(1, case.bus_count + 1))
        for b in pmu:
            if not 1 <= int(b) <= case.bus_count:
                raise ConfigError(f"PMU bus {b} outside 1..{case.bus_count}")
        grid = cls(case=case, faults=faults, pmu_buses=tuple(int(b) - 1 for b in pmu))
        for key in ("fault_start", "time_step", "horizon", "sample_rate",
                    "duration_spread", "max_duration_cycles", "min_duration_cycles",
                    "train_fraction"):
            if key in d:
                setattr(grid, key, float(d[key]))
        for key in ("stable", "unstable", "durations_per_side", "seed"):
            if key in d:
                setattr(grid, key, int(d[key]))
        if "loading_factors" in d:
            grid.loading_factors = [float(x) for x in d["loading_factors"]]
        if not 0.0 < grid.train_fraction < 1.0:
            raise ConfigError("train_fraction must be in (0, 1)")
        return grid

    def spec(self, loading, fault, cycles, sid) -> ScenarioSpec:
        return ScenarioSpec(
            loading_factor=loading,
            fault=fault,
            fault_start=self.fault_start,
            fault_duration=cycles,
            time_step=self.time_step,
            horizon=self.horizon,
            pmu_buses=tuple(self.pmu_buses),
            sample_rate=self.sample_rate,
            scenario_id=sid,
        )


@dataclass
class Dataset:
    samples: list
    splits: list
    channels: list  # 0-based bus indices
    sample_rate: float
    seed: int
    case_name: str = "case"
    meta: list = field(default_factory=list)
    normalization: dict | None = None

    def __len__(self):
        return len(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=int)

    def indices(self, split=None) -> list:
        if split is None:
            return list(range(len(self.samples)))
        return [i for i, s in enumerate(self.splits) if s == split]

    def windows(self, rows: int, split=None):
        """(array (S, rows, channels), labels (S,)) from each measured sample on."""
        idx = self.indices(split)
        if not idx:
            return np.zeros((0, rows, len(self.channels))), np.zeros(0, dtype=int)
        x = np.stack([self.samples[i].window(rows) for i in idx])
        y = np.array([self.samples[i].label for i in idx], dtype=int)
        return x, y

    def select_channels(self, positions) -> "Dataset":
        """Dataset restricted to the given channel positions (PMU subset)."""
        positions = list(positions)
        if not positions:
            raise ConfigError("channel subset must be nonempty")
        for p in positions:
            if not 0 <= p < len(self.channels):
                raise ConfigError(f"channel position {p} outside 0..{len(self.channels) - 1}")
        samples = [replace(s, voltages=s.voltages[:, positions]) for s in self.samples]
        return replace(self, samples=samples, channels=[self.channels[p] for p in positions],
                       normalization=None)

    def class_counts(self, split=None):
        y = self.labels[self.indices(split)] if len(self) else np.zeros(0, int)
        return {"stable": int((y == 1).sum()), "unstable": int((y == 0).sum())}


def stratified_split(labels, train_fraction, rng) -> list:
    labels = np.asarray(labels)
    splits = [TEST] * len(labels)
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        n_train = int(round(train_fraction * len(idx)))
        for i in idx[:n_train]:
            splits[i] = TRAIN
    return splits


def _run(job):
    system, spec, stop = job
    return integrate_transient(spec, system, stop_on_separation=stop)


def _map(jobs, n_jobs):
    if n_jobs and n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(_run, jobs, chunksize=max(1, len(jobs) // (4 * n_jobs))))
    return [_run(j) for j in jobs]


def critical_clearing_cycles(grid: ScenarioGrid, system, fault, tol=0.05):
    """Bisection on the fault duration (cycles) for the stability boundary.

    Returns ``None`` if still stable at ``max_duration_cycles`` and ``0.0`` if
    already unstable at ``min_duration_cycles``.
    """
    def stable(cycles):
        s = integrate_transient(grid.spec(1.0, fault, cycles, "cct"), system,
                                stop_on_separation=True)
        return s.label == 1

    lo, hi = grid.min_duration_cycles, grid.max_duration_cycles
    if stable(hi):
        return None
    if not stable(lo):
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _candidate_durations(grid, cct, rng):
    k = grid.durations_per_side
    lo_bound, hi_bound = grid.min_duration_cycles, grid.max_duration_cycles
    if cct is None:
        return list(rng.uniform(lo_bound, hi_bound, size=k))
    if cct == 0.0:
        return list(rng.uniform(lo_bound, min(hi_bound, 4 * lo_bound + 1.0), size=k))
    below = rng.uniform(max(lo_bound, cct * (1 - grid.duration_spread)), cct, size=k)
    above = rng.uniform(cct, min(hi_bound, cct * (1 + grid.duration_spread)), size=k)
    return list(below) + list(above)


def generate_dataset(grid: ScenarioGrid, seed=None, jobs: int = 1) -> Dataset:
    """Simulate the grid, then draw a class-balanced, stratified-split dataset.

    Fault durations are drawn on both sides of each scenario's critical
    clearing time. Everything is a pure function of ``(grid, seed)``.
    """
    seed = grid.seed if seed is None else int(seed)
    ss = np.random.SeedSequence(seed)
    dur_ss, pick_ss, split_ss = ss.spawn(3)
    systems = {lf: build_system(grid.case, lf) for lf in grid.loading_factors}

    candidates = []
    dur_rngs = dur_ss.spawn(len(grid.loading_factors) * len(grid.faults))
    k = 0
    for lf in grid.loading_factors:
        for fault in grid.faults:
            cct = critical_clearing_cycles(grid, systems[lf], fault)
            rng = np.random.default_rng(dur_rngs[k])
            k += 1
            for j, cyc in enumerate(_candidate_durations(grid, cct, rng)):
                sid = f"lf{lf:g}-{fault.label}-d{j}"
                candidates.append((lf, fault, float(cyc), sid))
    log.info("simulating %d candidate events", len(candidates))

    jobs_list = [(systems[lf], grid.spec(lf, f, cyc, sid), False) for lf, f, cyc, sid in candidates]
    results = _map(jobs_list, jobs)
    need_rows = 8
    usable = [i for i, s in enumerate(results)
              if s.voltages.shape[0] - s.measured_index >= need_rows]

    rng = np.random.default_rng(pick_ss)
    chosen = []
    for cls, want in ((1, grid.stable), (0, grid.unstable)):
        pool = [i for i in usable if results[i].label == cls]
        if len(pool) < want:
            raise ImbalanceError(cls, len(pool), want)
        pick = rng.permutation(len(pool))[:want]
        chosen.extend(pool[p] for p in sorted(pick))
    chosen.sort()

    samples, meta = [], []
    for n, i in enumerate(chosen):
        lf, fault, cyc, sid = candidates[i]
        samples.append(replace(results[i], scenario_id=sid))
        meta.append({"id": f"s{n:05d}", "loading_factor": lf, "fault": fault.label,
                     "fault_duration_cycles": cyc})
    splits = stratified_split([s.label for s in samples], grid.train_fraction,
                              np.random.default_rng(split_ss))
    return Dataset(samples=samples, splits=splits, channels=list(grid.pmu_buses),
                   sample_rate=grid.sample_rate, seed=seed, case_name=grid.case.name,
                   meta=meta)


def _write_matrix(path: Path, a: np.ndarray):
    path.write_bytes(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read_matrix(path: Path, cols: int) -> np.ndarray:
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    if cols == 0 or raw.size % cols:
        raise FormatError(f"{path}: size {raw.size} not divisible by {cols} columns")
    return raw.reshape(-1, cols).astype(float)


def save_dataset(ds: Dataset, directory) -> Path:
    directory = Path(directory)
    (directory / "samples").mkdir(parents=True, exist_ok=True)
    machines = ds.samples[0].rotor_angles.shape[1] if ds.samples else 0
    records = []
    for n, (s, split) in enumerate(zip(ds.samples, ds.splits)):
        m = ds.meta[n] if n < len(ds.meta) else {"id": f"s{n:05d}"}
        rid = m["id"]
        vpath, apath = f"samples/{rid}.v.f64", f"samples/{rid}.a.f64"
        _write_matrix(directory / vpath, s.voltages)
        _write_matrix(directory / apath, s.rotor_angles)
        rec = dict(m)
        rec.update({
            "scenario_id": s.scenario_id,
            "label": int(s.label),
            "eta": float(s.eta),
            "split": split,
            "measured_index": int(s.measured_index),
            "frames": int(s.voltages.shape[0]),
            "terminated_early": bool(s.terminated_early),
            "voltages": vpath,
            "angles": apath,
        })
        records.append(rec)
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "case": ds.case_name,
        "record_count": len(ds.samples),
        "channels": [int(c) + 1 for c in ds.channels],
        "machine_count": machines,
        "sample_rate": ds.sample_rate,
        "seed": ds.seed,
        "dtype": "<f8",
        "normalization": ds.normalization,
        "class_counts": ds.class_counts(),
        "records": records,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return directory


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    mpath = directory / "manifest.json"
    if not mpath.is_file():
        raise FileNotFoundError(f"dataset manifest not found: {mpath}")
    manifest = json.loads(mpath.read_text())
    if manifest.get("format") != DATASET_FORMAT:
        raise FormatError(f"{mpath}: not a {DATASET_FORMAT} manifest")
    if manifest.get("version") != DATASET_VERSION:
        raise FormatError(f"{mpath}: unsupported dataset version {manifest.get('version')}")
    nch = len(manifest["channels"])
    nm = int(manifest["machine_count"])
    samples, splits, meta = [], [], []
    rate = float(manifest["sample_rate"])
    for rec in manifest["records"]:
        v = _read_matrix(directory / rec["voltages"], nch)
        a = _read_matrix(directory / rec["angles"], nm)
        if v.shape[0] != rec["frames"] or a.shape[0] != rec["frames"]:
            raise FormatError(f"{rec['id']}: frame count mismatch")
        samples.append(TransientSample(
            voltages=v, rotor_angles=a, eta=float(rec["eta"]), label=int(rec["label"]),
            scenario_id=rec["scenario_id"], measured_index=int(rec["measured_index"]),
            times=np.arange(v.shape[0]) / rate,
            terminated_early=bool(rec.get("terminated_early", False)),
            fault_duration=float(rec.get("fault_duration_cycles", math.nan)),
        ))
        splits.append(rec["split"])
        meta.append({k: rec[k] for k in ("id", "loading_factor", "fault", "fault_duration_cycles")
                     if k in rec})
    return Dataset(samples=samples, splits=splits,
                   channels=[c - 1 for c in manifest["channels"]], sample_rate=rate,
                   seed=manifest.get("seed", 0), case_name=manifest.get("case", "case"),
                   meta=meta, normalization=manifest.get("normalization"))
