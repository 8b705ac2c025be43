"""Instruction cache simulation for custom-instruction (ISA extension) studies."""

__version__ = "0.1.0"

from .cache import AccessStats, CacheConfig, reference_simulate, simulate, simulate_sweep
from .ci import (
    CiCandidate,
    CiConstraints,
    CiSelection,
    RewriteResult,
    enumerate_candidates,
    greedy_select,
    reduction_stats,
    substitute,
)
from .energy import (
    EnergyParams,
    EnergyResult,
    SizingReport,
    SizingVerdict,
    downsize_decision,
    dyn_energy_reduction,
    energy,
    sweep_report,
)
from .program import (
    DynamicTrace,
    GeneratorSpec,
    InstructionRecord,
    StaticProgram,
    load_program,
    load_trace,
    synth_trace,
)

__all__ = [
    "AccessStats", "CacheConfig", "reference_simulate", "simulate", "simulate_sweep",
    "CiCandidate", "CiConstraints", "CiSelection", "RewriteResult",
    "enumerate_candidates", "greedy_select", "reduction_stats", "substitute",
    "EnergyParams", "EnergyResult", "SizingReport", "SizingVerdict",
    "downsize_decision", "dyn_energy_reduction", "energy", "sweep_report",
    "DynamicTrace", "GeneratorSpec", "InstructionRecord", "StaticProgram",
    "load_program", "load_trace", "synth_trace",
]
