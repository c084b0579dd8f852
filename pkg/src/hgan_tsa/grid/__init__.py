"""Classical-model multi-machine transient simulator and dataset generation."""

from .case import CaseData, MachineParams, bundled_case, bundled_case_path, load_case
from .dataset import (
    Dataset,
    ScenarioGrid,
    generate_dataset,
    load_dataset,
    save_dataset,
    stratified_split,
)
from .dynamics import ScenarioSpec, TransientSample, integrate_transient, swing_derivative
from .network import (
    FAULT_ON,
    POST_FAULT,
    PRE_FAULT,
    FaultSpec,
    NetworkModel,
    System,
    build_system,
    kron_reduce,
    recover_bus_voltages,
)
from .noise import NO_NOISE, inject_noise
from .stability import label, stability_index

__all__ = [
    "CaseData", "MachineParams", "bundled_case", "bundled_case_path", "load_case",
    "Dataset", "ScenarioGrid", "generate_dataset", "load_dataset", "save_dataset",
    "stratified_split", "ScenarioSpec", "TransientSample", "integrate_transient",
    "swing_derivative", "FAULT_ON", "POST_FAULT", "PRE_FAULT", "FaultSpec",
    "NetworkModel", "System", "build_system", "kron_reduce", "recover_bus_voltages",
    "NO_NOISE", "inject_noise", "label", "stability_index",
]
