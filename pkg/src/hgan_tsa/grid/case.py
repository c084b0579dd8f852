"""Case files: machine and branch data plus the pre-fault operating point.

A case is a small YAML document. Bus numbers in the file are 1-based; every
array built from a case is 0-based.

    name: wscc9
    base_frequency: 60
    bus_count: 9
    slack_bus: 1
    machines:          # one per generator bus
      - {bus: 1, H: 23.64, D: 2.0, xd_prime: 0.0608, p: 0.0, v: 1.04}
    branches:          # pi model, b is the total line charging
      - {from: 4, to: 5, r: 0.01, x: 0.085, b: 0.176}
    loads:
      - {bus: 5, p: 1.25, q: 0.5}

``p`` of the slack machine is ignored. The optional ``dataset`` block holds
the scenario grid consumed by :func:`hgan_tsa.grid.dataset.ScenarioGrid.from_case`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml
from scipy.optimize import root

from ..errors import ConfigError


@dataclass(frozen=True)
class MachineParams:
    inertia_constant: float
    damping: float
    transient_reactance: float
    mechanical_power: float = 0.0
    internal_emf_magnitude: float = 1.0

    def __post_init__(self):
        if not self.inertia_constant > 0:
            raise ConfigError(f"inertia_constant must be > 0, got {self.inertia_constant}")
        if not self.transient_reactance > 0:
            raise ConfigError(
                f"transient_reactance must be > 0, got {self.transient_reactance}"
            )


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0

    @property
    def series_admittance(self) -> complex:
        return 1.0 / complex(self.r, self.x)


@dataclass
class CaseData:
    name: str
    bus_count: int
    slack_bus: int
    base_frequency: float
    machine_buses: list[int]
    machine_h: list[float]
    machine_d: list[float]
    machine_xd: list[float]
    machine_p: list[float]
    machine_v: list[float]
    branches: list[Branch]
    load_p: np.ndarray
    load_q: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def machine_count(self) -> int:
        return len(self.machine_buses)


def _bus(value, bus_count, what):
    idx = int(value) - 1
    if not 0 <= idx < bus_count:
        raise ConfigError(f"{what}: bus {value} outside 1..{bus_count}")
    return idx


def parse_case(doc: dict) -> CaseData:
    known = {"name", "base_frequency", "bus_count", "slack_bus", "machines",
             "branches", "loads", "dataset"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown case keys: {sorted(unknown)}")
    try:
        n = int(doc["bus_count"])
        machines = doc["machines"]
        branches = doc["branches"]
    except KeyError as exc:
        raise ConfigError(f"case is missing required key {exc}") from None
    if not machines:
        raise ConfigError("case defines no machines")

    load_p = np.zeros(n)
    load_q = np.zeros(n)
    for ld in doc.get("loads") or []:
        i = _bus(ld["bus"], n, "load")
        load_p[i] += float(ld.get("p", 0.0))
        load_q[i] += float(ld.get("q", 0.0))

    mbus = [_bus(m["bus"], n, "machine") for m in machines]
    if len(set(mbus)) != len(mbus):
        raise ConfigError("at most one machine per bus")
    slack = _bus(doc.get("slack_bus", machines[0]["bus"]), n, "slack_bus")
    if slack not in mbus:
        raise ConfigError("slack bus must carry a machine")

    return CaseData(
        name=str(doc.get("name", "case")),
        bus_count=n,
        slack_bus=slack,
        base_frequency=float(doc.get("base_frequency", 60.0)),
        machine_buses=mbus,
        machine_h=[float(m["H"]) for m in machines],
        machine_d=[float(m.get("D", 0.0)) for m in machines],
        machine_xd=[float(m["xd_prime"]) for m in machines],
        machine_p=[float(m.get("p", 0.0)) for m in machines],
        machine_v=[float(m.get("v", 1.0)) for m in machines],
        branches=[
            Branch(_bus(b["from"], n, "branch"), _bus(b["to"], n, "branch"),
                   float(b.get("r", 0.0)), float(b["x"]), float(b.get("b", 0.0)))
            for b in branches
        ],
        load_p=load_p,
        load_q=load_q,
        extra={"dataset": doc.get("dataset") or {}},
    )


def load_case(path) -> CaseData:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"case file not found: {path}")
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: case file must be a mapping")
    return parse_case(doc)


def bundled_case(name: str = "wscc9") -> CaseData:
    """Load one of the cases shipped in ``hgan_tsa/data``."""
    text = resources.files("hgan_tsa.data").joinpath(f"{name}.yaml").read_text()
    return parse_case(yaml.safe_load(text))


def bundled_case_path(name: str = "wscc9") -> Path:
    return Path(str(resources.files("hgan_tsa.data").joinpath(f"{name}.yaml")))


def build_ybus(bus_count: int, branches) -> np.ndarray:
    y = np.zeros((bus_count, bus_count), dtype=complex)
    for br in branches:
        ys = br.series_admittance
        i, j = br.from_bus, br.to_bus
        y[i, i] += ys + 0.5j * br.b
        y[j, j] += ys + 0.5j * br.b
        y[i, j] -= ys
        y[j, i] -= ys
    return y


@dataclass
class PowerFlowResult:
    voltages: np.ndarray  # complex bus voltages
    injections: np.ndarray  # complex net injection S = V conj(Y V)


def solve_power_flow(case: CaseData, loading_factor: float = 1.0, tol: float = 1e-12):
    """Polar-form AC power flow with the case's machines as PV buses."""
    n = case.bus_count
    ybus = build_ybus(n, case.branches)
    p_load = case.load_p * loading_factor
    q_load = case.load_q * loading_factor

    p_spec = -p_load.copy()
    v_set = np.ones(n)
    pv = []
    for bus, p, v in zip(case.machine_buses, case.machine_p, case.machine_v):
        v_set[bus] = v
        if bus != case.slack_bus:
            p_spec[bus] += p * loading_factor
            pv.append(bus)
    pq = [i for i in range(n) if i not in case.machine_buses]
    q_spec = -q_load
    ang_idx = [i for i in range(n) if i != case.slack_bus]

    def unpack(z):
        theta = np.zeros(n)
        vm = v_set.copy()
        theta[ang_idx] = z[: len(ang_idx)]
        vm[pq] = z[len(ang_idx):]
        return vm * np.exp(1j * theta)

    def mismatch(z):
        v = unpack(z)
        s = v * np.conj(ybus @ v)
        return np.concatenate([s.real[ang_idx] - p_spec[ang_idx], s.imag[pq] - q_spec[pq]])

    z0 = np.concatenate([np.zeros(len(ang_idx)), np.ones(len(pq))])
    sol = root(mismatch, z0, method="hybr", tol=tol)
    if not sol.success or np.max(np.abs(mismatch(sol.x))) > 1e-9:
        raise ConfigError(
            f"power flow did not converge at loading factor {loading_factor}: {sol.message}"
        )
    v = unpack(sol.x)
    return PowerFlowResult(voltages=v, injections=v * np.conj(ybus @ v))
