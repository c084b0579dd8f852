"""Classical-model swing dynamics and fixed-step RK4 transient simulation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..errors import ConfigError
from .network import FAULT_ON, POST_FAULT, PRE_FAULT, FaultSpec, System
from .stability import label as stability_label
from .stability import stability_index

ANGLE_GUARD_DEG = 1.0e4


@dataclass(frozen=True)
class ScenarioSpec:
    loading_factor: float = 1.0
    fault: FaultSpec | None = None
    fault_start: float = 0.1
    fault_duration: float = 5.0  # cycles at nominal frequency
    time_step: float = 1.0e-3
    horizon: float = 3.0
    pmu_buses: tuple = (0,)
    sample_rate: float = 120.0
    scenario_id: str = "scenario"

    def __post_init__(self):
        if self.fault_start < 0:
            raise ConfigError("fault_start must be >= 0")
        if not self.fault_duration > 0:
            raise ConfigError("fault_duration must be > 0")
        if not self.sample_rate > 0:
            raise ConfigError("sample_rate must be > 0")
        if not self.time_step > 0 or not self.horizon > 0:
            raise ConfigError("time_step and horizon must be > 0")
        if len(self.pmu_buses) == 0:
            raise ConfigError("pmu_buses must be nonempty")


@dataclass
class TransientSample:
    voltages: np.ndarray  # (frames, pmu) per-unit magnitudes
    rotor_angles: np.ndarray  # (frames, machines) degrees, relative to machine 1
    eta: float
    label: int
    scenario_id: str
    measured_index: int  # first frame at or after fault clearing
    times: np.ndarray = field(default=None, repr=False)
    terminated_early: bool = False
    fault_duration: float = float("nan")

    @property
    def measured(self) -> np.ndarray:
        return self.voltages[self.measured_index]

    def window(self, rows: int) -> np.ndarray:
        """``rows`` voltage frames starting at the measured sample."""
        end = self.measured_index + rows
        if end > self.voltages.shape[0]:
            raise ValueError(
                f"{self.scenario_id}: only {self.voltages.shape[0] - self.measured_index} "
                f"post-clearing frames, {rows} requested"
            )
        return self.voltages[self.measured_index:end]


class SwingModel:
    """Vectorized right-hand side of the classical swing equations.

    State is ``[delta (rad), speed deviation (pu)]``::

        d(delta)/dt = w_s * dw
        2H d(dw)/dt = Pm - Pe - D dw
    """

    def __init__(self, machines, base_frequency=60.0):
        self.m = len(machines)
        self.emf = np.array([mc.internal_emf_magnitude for mc in machines])
        self.pm = np.array([mc.mechanical_power for mc in machines])
        self.two_h = 2.0 * np.array([mc.inertia_constant for mc in machines])
        self.damping = np.array([mc.damping for mc in machines])
        self.omega_s = 2.0 * math.pi * base_frequency

    def electrical_power(self, delta, reduced):
        v = self.emf * np.exp(1j * delta)
        return (v * np.conj(reduced @ v)).real

    def __call__(self, state, reduced):
        m = self.m
        delta, dw = state[:m], state[m:]
        pe = self.electrical_power(delta, reduced)
        out = np.empty_like(state)
        out[:m] = self.omega_s * dw
        out[m:] = (self.pm - pe - self.damping * dw) / self.two_h
        return out


def swing_derivative(state, reduced, machines, base_frequency=60.0):
    """Time derivative of ``[angles (rad), speed deviations (pu)]``."""
    return SwingModel(machines, base_frequency)(np.asarray(state, dtype=float), reduced)


@njit(cache=True)
def _pe_kernel(delta, g, b, emf, out):
    m = delta.shape[0]
    for i in range(m):
        acc = 0.0
        for j in range(m):
            d = delta[i] - delta[j]
            acc += emf[j] * (g[i, j] * math.cos(d) + b[i, j] * math.sin(d))
        out[i] = emf[i] * acc


@njit(cache=True)
def _rhs_kernel(y, g, b, emf, pm, two_h, damp, ws, pe, out):
    m = emf.shape[0]
    _pe_kernel(y[:m], g, b, emf, pe)
    for i in range(m):
        out[i] = ws * y[m + i]
        out[m + i] = (pm[i] - pe[i] - damp[i] * y[m + i]) / two_h[i]


@njit(cache=True)
def _rk4_advance(y, h, n, g, b, emf, pm, two_h, damp, ws, guard):
    """Take ``n`` RK4 steps in place; return True if the angle guard tripped."""
    m = emf.shape[0]
    k1 = np.empty_like(y)
    k2 = np.empty_like(y)
    k3 = np.empty_like(y)
    k4 = np.empty_like(y)
    tmp = np.empty_like(y)
    pe = np.empty(m)
    for _ in range(n):
        _rhs_kernel(y, g, b, emf, pm, two_h, damp, ws, pe, k1)
        for i in range(y.shape[0]):
            tmp[i] = y[i] + 0.5 * h * k1[i]
        _rhs_kernel(tmp, g, b, emf, pm, two_h, damp, ws, pe, k2)
        for i in range(y.shape[0]):
            tmp[i] = y[i] + 0.5 * h * k2[i]
        _rhs_kernel(tmp, g, b, emf, pm, two_h, damp, ws, pe, k3)
        for i in range(y.shape[0]):
            tmp[i] = y[i] + h * k3[i]
        _rhs_kernel(tmp, g, b, emf, pm, two_h, damp, ws, pe, k4)
        for i in range(y.shape[0]):
            y[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        for i in range(m):
            rel = y[i] - y[0]
            if not np.isfinite(y[i]) or not np.isfinite(y[m + i]) or abs(rel) > guard:
                return True
    return False


def rk4_step(f, y, h, *args):
    k1 = f(y, *args)
    k2 = f(y + 0.5 * h * k1, *args)
    k3 = f(y + 0.5 * h * k2, *args)
    k4 = f(y + h * k3, *args)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _phase_at(t, t_fault, t_clear):
    if t_fault is None or t < t_fault:
        return PRE_FAULT
    if t < t_clear:
        return FAULT_ON
    return POST_FAULT


def integrate_transient(
    spec: ScenarioSpec,
    system: System,
    initial_state=None,
    stop_on_separation: bool = False,
) -> TransientSample:
    """Simulate one scenario and return its labelled PMU voltage record.

    Integration is piecewise between fault events and frame times, each piece
    split into equal RK4 steps no longer than ``spec.time_step``. Frames are
    taken at ``k / sample_rate``; at an event instant the post-event topology
    applies. ``stop_on_separation`` ends the run as soon as the post-clearing
    angle spread exceeds 360 degrees, which already fixes the label.
    """
    net = system.with_fault(spec.fault).network
    for b in spec.pmu_buses:
        if not 0 <= b < net.bus_count:
            raise ConfigError(f"PMU bus {b + 1} outside 1..{net.bus_count}")
    f0 = system.base_frequency
    model = SwingModel(system.machines, f0)
    m = model.m
    pmu = list(spec.pmu_buses)

    if spec.fault is not None:
        t_fault = spec.fault_start
        t_clear = spec.fault_start + spec.fault_duration / f0
    else:
        t_fault = t_clear = None

    def snap(t):
        k = round(t * spec.sample_rate)
        return k / spec.sample_rate if abs(t * spec.sample_rate - k) < 1e-7 else t

    if t_fault is not None:
        t_fault, t_clear = snap(t_fault), snap(t_clear)

    n_frames = int(math.floor(spec.horizon * spec.sample_rate + 1e-9)) + 1
    frame_times = np.arange(n_frames) / spec.sample_rate
    points = set(frame_times.tolist())
    for t in (t_fault, t_clear):
        if t is not None and t < frame_times[-1]:
            points.add(t)
    points = sorted(points)

    reductions = {p: net.reduction(p) for p in (PRE_FAULT, FAULT_ON, POST_FAULT)}
    # recovery rows restricted to PMU buses; grounded PMU buses read zero
    pmu_rec = {}
    for p, (_, rec, keep) in reductions.items():
        pos = {bus: k for k, bus in enumerate(keep)}
        rows = np.zeros((len(pmu), m), dtype=complex)
        for r, bus in enumerate(pmu):
            if bus in pos:
                rows[r] = rec[pos[bus]]
        pmu_rec[p] = rows

    if initial_state is None:
        state = np.concatenate([system.initial_angles, np.zeros(m)])
    else:
        state = np.array(initial_state, dtype=float)

    volts = np.zeros((n_frames, len(pmu)))
    angles = np.zeros((n_frames, m))
    guard = math.radians(ANGLE_GUARD_DEG)
    frame_idx = {t: k for k, t in enumerate(frame_times.tolist())}
    if t_clear is None:
        measured = 0
    else:
        measured = int(math.ceil(t_clear * spec.sample_rate - 1e-9))
    recorded = 0
    terminated = False

    def record(t, y):
        nonlocal recorded
        k = frame_idx.get(t)
        if k is None:
            return
        ph = _phase_at(t, t_fault, t_clear)
        e = model.emf * np.exp(1j * y[:m])
        volts[k] = np.abs(pmu_rec[ph] @ e)
        angles[k] = np.degrees(y[:m] - y[0])
        recorded = k + 1

    record(points[0], state)
    gb = {p: (np.ascontiguousarray(r[0].real), np.ascontiguousarray(r[0].imag))
          for p, r in reductions.items()}
    for a, b in zip(points[:-1], points[1:]):
        g, bm = gb[_phase_at(a, t_fault, t_clear)]
        n = max(1, int(math.ceil((b - a) / spec.time_step - 1e-9)))
        terminated = _rk4_advance(state, (b - a) / n, n, g, bm, model.emf, model.pm,
                                  model.two_h, model.damping, model.omega_s, guard)
        if terminated:
            break
        record(b, state)
        if stop_on_separation and t_clear is not None and b >= t_clear and recorded > measured:
            if np.ptp(angles[recorded - 1]) > 360.0:
                break

    volts = volts[:recorded]
    angles = angles[:recorded]
    post = angles[min(measured, recorded - 1):]
    if terminated:
        eta = min(stability_index(post), 0.0) if post.shape[0] else 0.0
    elif m >= 2:
        eta = stability_index(post)
    else:
        eta = 1.0
    return TransientSample(
        voltages=volts,
        rotor_angles=angles,
        eta=eta,
        label=stability_label(eta),
        scenario_id=spec.scenario_id,
        measured_index=measured,
        times=frame_times[:recorded],
        terminated_early=terminated,
        fault_duration=spec.fault_duration,
    )
