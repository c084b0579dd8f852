"""Network model, Kron reduction and bus-voltage recovery."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigError, DegenerateNetworkError
from .case import CaseData, MachineParams, build_ybus, solve_power_flow

PRE_FAULT = "pre"
FAULT_ON = "fault"
POST_FAULT = "post"


@dataclass(frozen=True)
class FaultSpec:
    """A bolted three-phase fault on a bus or part-way along a branch.

    ``element`` is a 0-based bus index for ``kind="bus"`` and a 0-based
    branch index for ``kind="line"``; ``position`` is the fractional distance
    from the branch's from-bus.
    """

    kind: str
    element: int
    position: float = 0.5

    def __post_init__(self):
        if self.kind not in ("bus", "line"):
            raise ConfigError(f"fault kind must be 'bus' or 'line', got {self.kind!r}")
        if self.kind == "line" and not 0.0 < self.position < 1.0:
            raise ConfigError(f"line fault position must be in (0, 1), got {self.position}")

    @property
    def label(self) -> str:
        if self.kind == "bus":
            return f"bus{self.element + 1}"
        return f"line{self.element + 1}@{self.position:g}"


@dataclass(frozen=True)
class TopologyPhase:
    admittance: np.ndarray  # bus admittance without loads or machines
    grounded: tuple = ()


@dataclass
class NetworkModel:
    bus_count: int
    generator_buses: list[int]
    load_admittances: np.ndarray
    internal_reactances: np.ndarray
    phases: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def machine_count(self) -> int:
        return len(self.generator_buses)

    def admittance_matrix(self, phase: str) -> np.ndarray:
        return self.phases[phase].admittance

    def extended_matrix(self, phase: str):
        """Full admittance over (kept buses + internal machine nodes).

        Returns the matrix and the list of kept (ungrounded) bus indices.
        Loads are folded into the diagonal and each machine's transient
        reactance links its bus to an appended internal node.
        """
        ph = self.phases[phase]
        keep = [i for i in range(self.bus_count) if i not in ph.grounded]
        nb, m = len(keep), self.machine_count
        pos = {bus: k for k, bus in enumerate(keep)}
        y = np.zeros((nb + m, nb + m), dtype=complex)
        y[:nb, :nb] = ph.admittance[np.ix_(keep, keep)]
        y[np.arange(nb), np.arange(nb)] += self.load_admittances[keep]
        for g, bus in enumerate(self.generator_buses):
            yg = 1.0 / (1j * self.internal_reactances[g])
            y[nb + g, nb + g] += yg
            if bus in pos:
                k = pos[bus]
                y[k, k] += yg
                y[k, nb + g] -= yg
                y[nb + g, k] -= yg
        return y, keep

    def reduction(self, phase: str):
        """(reduced matrix, recovery matrix, kept buses) for one phase, cached."""
        if phase not in self._cache:
            self._cache[phase] = _reduce(self, phase)
        return self._cache[phase]


def _reduce(network: NetworkModel, phase: str):
    y, keep = network.extended_matrix(phase)
    nb = len(keep)
    y_ll, y_lg = y[:nb, :nb], y[:nb, nb:]
    y_gl, y_gg = y[nb:, :nb], y[nb:, nb:]
    if nb == 0:
        return y_gg.copy(), np.zeros((0, network.machine_count), dtype=complex), keep
    try:
        if np.linalg.cond(y_ll) > 1e13:
            raise np.linalg.LinAlgError("ill-conditioned")
        recovery = -np.linalg.solve(y_ll, y_lg)
    except np.linalg.LinAlgError:
        raise DegenerateNetworkError(
            f"load-bus admittance block is singular in phase {phase!r}"
        ) from None
    return y_gg + y_gl @ recovery, recovery, keep


def kron_reduce(network: NetworkModel, phase: str = PRE_FAULT) -> np.ndarray:
    """Eliminate all bus nodes, leaving machine internal nodes.

    Y_red = Y_gg - Y_gl Y_ll^-1 Y_lg, with grounded (faulted) buses removed
    before elimination.
    """
    return network.reduction(phase)[0].copy()


def recover_bus_voltages(internal_emfs, network: NetworkModel, phase: str = PRE_FAULT):
    """Complex bus voltages implied by the machine internal EMF phasors.

    ``internal_emfs`` may be a vector (machines,) or a stack (..., machines).
    Grounded buses read exactly zero.
    """
    _, recovery, keep = network.reduction(phase)
    e = np.asarray(internal_emfs, dtype=complex)
    out = np.zeros(e.shape[:-1] + (network.bus_count,), dtype=complex)
    if keep:
        out[..., keep] = e @ recovery.T
    return out


def with_fault(network: NetworkModel, fault: FaultSpec | None, branches=None) -> NetworkModel:
    """Copy of ``network`` with its fault-on phase set for ``fault``.

    Post-fault topology equals pre-fault. Without a fault, all three phases
    share the pre-fault matrix.
    """
    pre = network.phases[PRE_FAULT]
    if fault is None:
        fault_phase = pre
    elif fault.kind == "bus":
        if not 0 <= fault.element < network.bus_count:
            raise ConfigError(f"fault bus {fault.element + 1} out of range")
        fault_phase = TopologyPhase(pre.admittance, (fault.element,))
    else:
        if branches is None or not 0 <= fault.element < len(branches):
            raise ConfigError(f"fault branch {fault.element + 1} out of range")
        br = branches[fault.element]
        f = fault.position
        ys = br.series_admittance
        y = pre.admittance.copy()
        i, j = br.from_bus, br.to_bus
        # drop the branch, then ground its split sections at the fault point
        y[i, i] -= ys + 0.5j * br.b
        y[j, j] -= ys + 0.5j * br.b
        y[i, j] += ys
        y[j, i] += ys
        y[i, i] += ys / f + 0.5j * br.b * f
        y[j, j] += ys / (1.0 - f) + 0.5j * br.b * (1.0 - f)
        fault_phase = TopologyPhase(y, ())
    return replace(
        network,
        phases={PRE_FAULT: pre, FAULT_ON: fault_phase, POST_FAULT: pre},
        _cache={},
    )


def electrical_power(emfs: np.ndarray, reduced: np.ndarray) -> np.ndarray:
    return (emfs * np.conj(emfs @ reduced.T)).real


@dataclass
class System:
    """A case at one loading level: machines, network and equilibrium angles."""

    machines: list[MachineParams]
    network: NetworkModel
    initial_angles: np.ndarray  # radians
    base_frequency: float
    branches: list
    name: str = "case"

    def with_fault(self, fault: FaultSpec | None) -> "System":
        return replace(self, network=with_fault(self.network, fault, self.branches))


def build_system(case: CaseData, loading_factor: float = 1.0) -> System:
    """Solve the pre-fault power flow and set machine EMFs and mechanical power.

    Mechanical power is taken as the electrical power of the Kron-reduced
    pre-fault network at the initial angles, so the equilibrium derivative is
    zero to rounding.
    """
    if not loading_factor > 0:
        raise ConfigError(f"loading_factor must be > 0, got {loading_factor}")
    pf = solve_power_flow(case, loading_factor)
    v = pf.voltages
    p_load = case.load_p * loading_factor
    q_load = case.load_q * loading_factor
    load_y = (p_load - 1j * q_load) / np.abs(v) ** 2

    buses = case.machine_buses
    xd = np.array(case.machine_xd)
    s_gen = pf.injections[buses] + (p_load + 1j * q_load)[buses]
    i_gen = np.conj(s_gen / v[buses])
    emf = v[buses] + 1j * xd * i_gen

    ybus = build_ybus(case.bus_count, case.branches)
    pre = TopologyPhase(ybus, ())
    network = NetworkModel(
        bus_count=case.bus_count,
        generator_buses=list(buses),
        load_admittances=load_y,
        internal_reactances=xd,
        phases={PRE_FAULT: pre, FAULT_ON: pre, POST_FAULT: pre},
    )
    pm = electrical_power(emf, network.reduction(PRE_FAULT)[0])
    machines = [
        MachineParams(h, d, x, float(p), float(abs(e)))
        for h, d, x, p, e in zip(case.machine_h, case.machine_d, xd, pm, emf)
    ]
    return System(
        machines=machines,
        network=network,
        initial_angles=np.angle(emf),
        base_frequency=case.base_frequency,
        branches=list(case.branches),
        name=case.name,
    )
