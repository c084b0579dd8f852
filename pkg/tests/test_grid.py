import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgan_tsa.errors import ConfigError, FormatError, ImbalanceError, StabilityIndexError
from hgan_tsa.grid import (
    FAULT_ON,
    POST_FAULT,
    PRE_FAULT,
    FaultSpec,
    ScenarioGrid,
    ScenarioSpec,
    build_system,
    bundled_case,
    generate_dataset,
    inject_noise,
    integrate_transient,
    kron_reduce,
    load_case,
    load_dataset,
    recover_bus_voltages,
    save_dataset,
    stability_index,
    swing_derivative,
)
from hgan_tsa.grid.case import MachineParams, parse_case, solve_power_flow
from hgan_tsa.grid.dynamics import SwingModel
from hgan_tsa.grid.network import NetworkModel, System, TopologyPhase, with_fault
from hgan_tsa.grid.noise import add_noise
from hgan_tsa.grid.stability import label, max_angle_separation


def _network(ybus, gen_buses, xd, loads=None):
    n = ybus.shape[0]
    pre = TopologyPhase(ybus, ())
    return NetworkModel(n, list(gen_buses), np.zeros(n, complex) if loads is None else loads,
                        np.asarray(xd, float), {PRE_FAULT: pre, FAULT_ON: pre, POST_FAULT: pre})


def _line(n, pairs):
    y = np.zeros((n, n), complex)
    for i, j, z in pairs:
        ys = 1 / z
        y[i, i] += ys
        y[j, j] += ys
        y[i, j] -= ys
        y[j, i] -= ys
    return y


# ------------------------------------------------------------------ case files

def test_bundled_cases_parse():
    c = bundled_case("wscc9")
    assert c.bus_count == 9 and c.machine_count == 3
    assert bundled_case("smib").machine_count == 2


def test_unknown_case_key_rejected():
    doc = {"name": "x", "bus_count": 1, "slack_bus": 1, "machines": [], "branches": [],
           "colour": "blue"}
    with pytest.raises(ConfigError, match="colour"):
        parse_case(doc)


def test_missing_case_file_names_path(tmp_path):
    p = tmp_path / "nope.yaml"
    with pytest.raises(FileNotFoundError, match="nope.yaml"):
        load_case(p)


def test_machine_validation():
    with pytest.raises(ConfigError):
        MachineParams(0.0, 0.0, 0.1)
    with pytest.raises(ConfigError):
        MachineParams(1.0, 0.0, 0.0)


def test_power_flow_balances():
    c = bundled_case("wscc9")
    pf = solve_power_flow(c)
    # slack picks up load plus losses
    assert pf.injections.real.sum() > 0
    assert abs(pf.voltages[0]) == pytest.approx(1.04, abs=1e-10)


# -------------------------------------------------------------- Kron reduction

def test_kron_two_bus_trivial():
    # one machine on one bus: reduced admittance is the machine's own reactance in
    # series with the bus load
    y_load = 0.5 - 0.2j
    net = _network(np.zeros((1, 1), complex), [0], [0.25], np.array([y_load]))
    yg = 1 / 0.25j
    expected = yg - yg * yg / (yg + y_load)
    assert kron_reduce(net)[0, 0] == pytest.approx(expected, abs=1e-12)


def test_kron_star_matches_dense_solve():
    # three machines on the leaves of a star around a load bus
    y = _line(4, [(0, 3, 0.1j), (1, 3, 0.2j), (2, 3, 0.05 + 0.15j)])
    loads = np.array([0, 0, 0, 1.0 - 0.3j])
    net = _network(y, [0, 1, 2], [0.1, 0.2, 0.3], loads)
    red = kron_reduce(net)
    full, _ = net.extended_matrix(PRE_FAULT)
    # oracle: drive each machine node with unit voltage, others zero, and read the
    # injected currents from a direct solve of the full system
    for k in range(3):
        e = np.zeros(3, complex)
        e[k] = 1.0
        v_bus = np.linalg.solve(full[:4, :4], -full[:4, 4:] @ e)
        current = full[4:, :4] @ v_bus + full[4:, 4:] @ e
        np.testing.assert_allclose(red[:, k], current, atol=1e-12)


def test_reinjection_reproduces_currents(wscc_system):
    net = wscc_system.network
    red = kron_reduce(net)
    e = np.exp(1j * wscc_system.initial_angles) * [m.internal_emf_magnitude
                                                    for m in wscc_system.machines]
    v = recover_bus_voltages(e, net)
    full, keep = net.extended_matrix(PRE_FAULT)
    state = np.concatenate([v[keep], e])
    inj = full @ state
    # load buses draw nothing beyond their shunts, machine nodes match reduced currents
    assert np.max(np.abs(inj[:len(keep)])) < 1e-10
    np.testing.assert_allclose(inj[len(keep):], red @ e, atol=1e-10)


def test_recovered_voltages_match_power_flow(wscc_system):
    c = bundled_case("wscc9")
    pf = solve_power_flow(c)
    e = np.exp(1j * wscc_system.initial_angles) * [m.internal_emf_magnitude
                                                    for m in wscc_system.machines]
    v = recover_bus_voltages(e, wscc_system.network)
    np.testing.assert_allclose(v, pf.voltages, atol=1e-9)


def test_bus_fault_pins_voltage_to_zero(wscc_system):
    net = with_fault(wscc_system.network, FaultSpec("bus", 6))
    e = np.ones(3, complex)
    v = recover_bus_voltages(e, net, FAULT_ON)
    assert v[6] == 0
    assert np.all(np.abs(np.delete(v, 6)) > 0)


def test_line_fault_at_end_matches_bus_fault(wscc_system):
    # a fault very close to a line's end approaches a bolted fault at that bus
    br = wscc_system.branches
    k = next(i for i, b in enumerate(br) if b.from_bus == 6)
    near = with_fault(wscc_system.network, FaultSpec("line", k, 1e-9), br)
    bus = with_fault(wscc_system.network, FaultSpec("bus", 6))
    np.testing.assert_allclose(kron_reduce(near, FAULT_ON), kron_reduce(bus, FAULT_ON),
                               atol=1e-6)


def test_voltage_recovery_smib_hand_phasor(smib_system):
    x1 = smib_system.machines[0].transient_reactance
    x2 = smib_system.machines[1].transient_reactance
    e1 = 1.1 * np.exp(0.4j)
    e2 = 1.0 + 0j
    current = (e1 - e2) / (1j * (x1 + 0.5 + x2))
    v = recover_bus_voltages(np.array([e1, e2]), smib_system.network)
    assert v[0] == pytest.approx(e1 - 1j * x1 * current, abs=1e-10)
    assert v[1] == pytest.approx(e2 + 1j * x2 * current, abs=1e-10)


def test_symmetric_two_machine_midpoint():
    # identical machines through identical lines: the middle bus sits at the mean
    y = _line(3, [(0, 1, 0.2j), (1, 2, 0.2j)])
    net = _network(y, [0, 2], [0.1, 0.1])
    e = np.array([np.exp(0.3j), np.exp(-0.3j)])
    v = recover_bus_voltages(e, net)
    assert v[1] == pytest.approx(np.cos(0.3), abs=1e-12)


# --------------------------------------------------------------- swing dynamics

def test_equilibrium_derivative_is_zero(wscc_system):
    s = wscc_system
    state = np.concatenate([s.initial_angles, np.zeros(3)])
    d = swing_derivative(state, kron_reduce(s.network), s.machines, s.base_frequency)
    assert np.max(np.abs(d)) < 1e-10


def test_smib_mechanical_power_balances(smib_system):
    pm = [m.mechanical_power for m in smib_system.machines]
    assert pm[0] == pytest.approx(0.8, abs=1e-10)
    assert pm[0] + pm[1] == pytest.approx(0.0, abs=1e-10)  # lossless


def _lossless_three_machine():
    y = _line(3, [(0, 1, 0.3j), (1, 2, 0.25j), (0, 2, 0.4j)])
    net = _network(y, [0, 1, 2], [0.1, 0.15, 0.2])
    machines = [MachineParams(4.0, 0.0, 0.1, 0.5, 1.05),
                MachineParams(3.0, 0.0, 0.15, -0.2, 1.0),
                MachineParams(2.0, 0.0, 0.2, -0.3, 1.02)]
    return System(machines, net, np.array([0.1, -0.05, -0.08]), 60.0, [])


def _potential(delta, machines, red):
    e = np.array([m.internal_emf_magnitude for m in machines])
    pm = np.array([m.mechanical_power for m in machines])
    w = -np.dot(pm, delta)
    for i in range(3):
        for j in range(i + 1, 3):
            w -= e[i] * e[j] * red[i, j].imag * math.cos(delta[i] - delta[j])
    return w


def test_swing_matches_energy_gradient():
    s = _lossless_three_machine()
    red = kron_reduce(s.network)
    assert np.max(np.abs(red.real)) < 1e-14
    delta = np.array([0.7, -0.2, 0.4])
    d = swing_derivative(np.concatenate([delta, [0.01, -0.02, 0.0]]), red, s.machines)
    h = 1e-6
    grad = np.array([(_potential(delta + h * np.eye(3)[i], s.machines, red)
                      - _potential(delta - h * np.eye(3)[i], s.machines, red)) / (2 * h)
                     for i in range(3)])
    two_h = np.array([2 * m.inertia_constant for m in s.machines])
    np.testing.assert_allclose(d[3:], -grad / two_h, atol=1e-8)
    np.testing.assert_allclose(d[:3], 2 * math.pi * 60 * np.array([0.01, -0.02, 0.0]))


def test_energy_conserved_lossless():
    s = _lossless_three_machine()
    red = kron_reduce(s.network)
    ws = 2 * math.pi * 60
    h = np.array([m.inertia_constant for m in s.machines])
    model = SwingModel(s.machines)
    y = np.array([0.6, -0.3, 0.2, 0.0, 0.0, 0.0])
    from hgan_tsa.grid.dynamics import rk4_step

    def energy(y):
        return ws * np.sum(h * y[3:] ** 2) + _potential(y[:3], s.machines, red)

    e0 = energy(y)
    for _ in range(1000):
        y = rk4_step(model, y, 1e-3, red)
    assert abs(energy(y) - e0) < 1e-8 * max(1.0, abs(e0))


def test_no_fault_stays_at_equilibrium(wscc_system):
    spec = ScenarioSpec(fault=None, horizon=2.0, pmu_buses=tuple(range(9)))
    s = integrate_transient(spec, wscc_system)
    drift = np.abs(s.rotor_angles - s.rotor_angles[0]).max()
    assert drift < 1e-6
    assert s.label == 1


def _eac_cct(system):
    m1, m2 = system.machines
    red = kron_reduce(system.network)
    pmax = m1.internal_emf_magnitude * m2.internal_emf_magnitude * abs(red[0, 1].imag)
    pm = m1.mechanical_power
    d0 = system.initial_angles[0] - system.initial_angles[1]
    dmax = math.pi - d0
    dc = math.acos((pm * (dmax - d0) + pmax * math.cos(dmax)) / pmax)
    return math.sqrt(4 * m1.inertia_constant * (dc - d0) / (2 * math.pi * 60 * pm))


def test_smib_equal_area_oracle(smib_system):
    tc = _eac_cct(smib_system)
    assert 0.15 < tc < 0.25
    fracs = np.r_[np.linspace(0.4, 0.95, 10), np.linspace(1.05, 1.6, 10)]
    wrong = []
    for f in fracs:
        spec = ScenarioSpec(fault=FaultSpec("bus", 0), fault_duration=f * tc * 60,
                            horizon=3.0, pmu_buses=(0, 1))
        got = integrate_transient(spec, smib_system).label
        if got != int(f < 1):
            wrong.append(f)
    assert wrong == []


def test_rk4_fourth_order(wscc_system):
    start = np.concatenate([wscc_system.initial_angles + [0, 0.3, -0.2], np.zeros(3)])

    def run(h):
        spec = ScenarioSpec(fault=None, horizon=0.5, time_step=h, pmu_buses=(0,))
        return integrate_transient(spec, wscc_system, initial_state=start).rotor_angles[-1]

    ref = run(1e-5)
    e1 = np.abs(run(1 / 120) - ref).max()
    e2 = np.abs(run(1 / 240) - ref).max()
    assert 12 < e1 / e2 < 20


def test_angle_guard_terminates(smib_system):
    spec = ScenarioSpec(fault=FaultSpec("bus", 0), fault_duration=200, horizon=10.0,
                        pmu_buses=(0,))
    s = integrate_transient(spec, smib_system)
    assert s.terminated_early and s.label == 0 and s.eta <= 0


def test_measured_index_is_first_frame_after_clearing(smib_system):
    spec = ScenarioSpec(fault=FaultSpec("bus", 0), fault_duration=6, horizon=0.5)
    s = integrate_transient(spec, smib_system)
    # clearing at 0.1 + 0.1 s lands exactly on frame 24
    assert s.measured_index == 24
    assert s.measured[0] > 0.5


def test_fault_on_frames_read_zero_at_faulted_bus(smib_system):
    spec = ScenarioSpec(fault=FaultSpec("bus", 0), fault_duration=6, horizon=0.5)
    s = integrate_transient(spec, smib_system)
    assert np.all(s.voltages[12:24, 0] == 0)
    assert np.all(s.voltages[:12, 0] > 0.9)


def test_scenario_validation():
    with pytest.raises(ConfigError):
        ScenarioSpec(fault_duration=0)
    with pytest.raises(ConfigError):
        ScenarioSpec(pmu_buses=())
    with pytest.raises(ConfigError):
        FaultSpec("line", 0, 1.0)


# -------------------------------------------------------------- stability index

def test_stability_index_endpoints():
    assert stability_index(np.array([[0.0, 0.0]])) == 1.0
    assert stability_index(np.array([[0.0, 360.0]])) == 0.0
    assert stability_index(np.array([[0.0, 149.57]])) == pytest.approx(0.4130, abs=1e-4)


def test_stability_index_needs_two_machines():
    with pytest.raises(StabilityIndexError):
        stability_index(np.zeros((5, 1)))
    with pytest.raises(StabilityIndexError):
        stability_index(np.zeros((0, 3)))


@given(st.lists(st.floats(-1e4, 1e4), min_size=2, max_size=6))
def test_index_bounded_and_label_consistent(row):
    a = np.array([row])
    eta = stability_index(a)
    assert -1 < eta <= 1
    assert label(eta) == int(max_angle_separation(a) < 360)


@given(st.floats(0, 1e5), st.floats(0, 1e5))
def test_index_monotone(a, b):
    lo, hi = sorted((a, b))
    assert stability_index(np.array([[0, lo]])) >= stability_index(np.array([[0, hi]]))


# --------------------------------------------------------------------- dataset

def test_dataset_balanced_and_split(smib_dataset):
    assert smib_dataset.class_counts() == {"stable": 10, "unstable": 10}
    assert smib_dataset.class_counts("train") == {"stable": 8, "unstable": 8}
    assert smib_dataset.class_counts("test") == {"stable": 2, "unstable": 2}
    for s in smib_dataset.samples:
        assert s.voltages.shape[0] - s.measured_index >= 8


def test_dataset_deterministic(smib_case, smib_dataset, tmp_path):
    grid = ScenarioGrid.from_case(smib_case, pmu_buses=[1, 2])
    again = generate_dataset(grid, jobs=2)
    save_dataset(smib_dataset, tmp_path / "a")
    save_dataset(again, tmp_path / "b")
    assert (tmp_path / "a/manifest.json").read_bytes() == (tmp_path / "b/manifest.json").read_bytes()
    for f in (tmp_path / "a/samples").iterdir():
        assert f.read_bytes() == (tmp_path / "b/samples" / f.name).read_bytes()


def test_dataset_round_trip(smib_dataset, tmp_path):
    save_dataset(smib_dataset, tmp_path)
    back = load_dataset(tmp_path)
    assert back.splits == smib_dataset.splits
    assert back.channels == smib_dataset.channels
    for a, b in zip(back.samples, smib_dataset.samples):
        assert np.array_equal(a.voltages, b.voltages)
        assert np.array_equal(a.rotor_angles, b.rotor_angles)
        assert a.eta == b.eta and a.label == b.label and a.measured_index == b.measured_index


def test_dataset_version_checked(smib_dataset, tmp_path):
    save_dataset(smib_dataset, tmp_path)
    m = tmp_path / "manifest.json"
    m.write_text(m.read_text().replace('"version": 1', '"version": 99'))
    with pytest.raises(FormatError, match="version"):
        load_dataset(tmp_path)


def test_imbalance_reports_remedy(smib_case):
    grid = ScenarioGrid.from_case(smib_case, stable=500)
    with pytest.raises(ImbalanceError, match="widen the fault-duration grid"):
        generate_dataset(grid)


def test_grid_rejects_unknown_keys(smib_case):
    with pytest.raises(ConfigError, match="bogus"):
        ScenarioGrid.from_case(smib_case, bogus=1)


def test_select_channels(smib_dataset):
    part = smib_dataset.select_channels([1])
    assert part.channels == [1]
    assert np.array_equal(part.samples[0].voltages[:, 0], smib_dataset.samples[0].voltages[:, 1])
    with pytest.raises(ConfigError):
        smib_dataset.select_channels([5])


# ----------------------------------------------------------------------- noise

@pytest.mark.parametrize("snr", [20.0, 50.0, 80.0])
def test_noise_snr_accuracy(snr):
    rng = np.random.default_rng(1)
    x = 1.0 + 0.05 * np.sin(np.arange(100_000) / 50.0)[:, None]
    noisy = add_noise(x, snr, rng)
    measured = 10 * np.log10(np.mean(x ** 2) / np.mean((noisy - x) ** 2))
    assert abs(measured - snr) < 0.5


def test_infinite_snr_is_identity(smib_dataset):
    s = smib_dataset.samples[0]
    out = inject_noise(s, math.inf, 0)
    assert np.array_equal(out.voltages, s.voltages)
    assert out.voltages is not s.voltages


def test_noise_reproducible(smib_dataset):
    s = smib_dataset.samples[0]
    a = inject_noise(s, 40.0, [1, 2]).voltages
    b = inject_noise(s, 40.0, [1, 2]).voltages
    assert np.array_equal(a, b)
