"""nvlab: a virtual NV-center lab for Rabi, T1 and Hahn-echo coherence studies."""

from .coherence import (CoherenceHierarchy, EchoParams, HierarchyVerdict, RabiParams, T1Params,
                        check_hierarchy, hahn_echo_signal, rabi_signal, t1_signal)
from .experiment import (MeasurementBlock, NoiseModel, PowerCalibration, Readout, SweepPoint,
                         SweepResult, find_dips, measure_block, normalize, run_odmr_scan, run_sweep)
from .fitting import (FitError, FitProblem, FitResult, PiPulse, extract_pi_pulse, fit, fit_sweep,
                      validate_hierarchy)
from .physics import (FieldConfig, PhysicalConstants, QubitProjection, evolve, project,
                      resonance_frequencies, rotating_frame_hamiltonian)
from .pulses import (HardwareProfile, PulseSequence, SequenceKind, SequenceSyntaxError, build,
                     compile, parse, render)

__all__ = [
    "CoherenceHierarchy", "EchoParams", "HierarchyVerdict", "RabiParams", "T1Params",
    "check_hierarchy", "hahn_echo_signal", "rabi_signal", "t1_signal",
    "MeasurementBlock", "NoiseModel", "PowerCalibration", "Readout", "SweepPoint", "SweepResult",
    "find_dips", "measure_block", "normalize", "run_odmr_scan", "run_sweep",
    "FitError", "FitProblem", "FitResult", "PiPulse", "extract_pi_pulse", "fit", "fit_sweep",
    "validate_hierarchy",
    "FieldConfig", "PhysicalConstants", "QubitProjection", "evolve", "project",
    "resonance_frequencies", "rotating_frame_hamiltonian",
    "HardwareProfile", "PulseSequence", "SequenceKind", "SequenceSyntaxError", "build", "compile",
    "parse", "render",
]
