"""Sub-synchronous resonance scanning for multi-machine systems with
five-mass turbine-generator shafts.

Typical use::

    from ssrscan import bundled_model, couple, assemble, transfer_magnitudes, find_peaks

    model = bundled_model()
    system = assemble(model, couple(model))
    scan = transfer_magnitudes(system, model.attack.bus)
    bands = find_peaks(scan)
"""

from .freq import FrequencyGrid, FrequencyScan, PeakBand, find_peaks, ratio_RM, transfer_magnitudes
from .model import (
    AttackSpec,
    ConfigError,
    SystemModel,
    bundled_model,
    bundled_path,
    dumps,
    load_model,
    read_model,
    validate,
)
from .network import build_susceptance, couple, kron_reduce, steady_state_angles
from .sim import SimulationResult, attack_signal, integrate, severity_ratios
from .statespace import StateIndexMap, StateSpaceSystem, assemble, build_input_map, eig_modes

__version__ = "0.1.0"

__all__ = [
    "AttackSpec",
    "ConfigError",
    "FrequencyGrid",
    "FrequencyScan",
    "PeakBand",
    "SimulationResult",
    "StateIndexMap",
    "StateSpaceSystem",
    "SystemModel",
    "assemble",
    "attack_signal",
    "build_input_map",
    "build_susceptance",
    "bundled_model",
    "bundled_path",
    "couple",
    "dumps",
    "eig_modes",
    "find_peaks",
    "integrate",
    "kron_reduce",
    "load_model",
    "ratio_RM",
    "read_model",
    "severity_ratios",
    "steady_state_angles",
    "transfer_magnitudes",
    "validate",
]
