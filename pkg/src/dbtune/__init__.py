"""Closed-loop DBMS memory self-tuning simulator.

A simulated buffer cache and shared pool are driven by an OLTP workload,
observed in fixed windows, sized by a small neural estimator and corrected
one granule at a time by a threshold-gated tuner.
"""
from .estimator import NetConfig, NeuralModel, TrainingSet, load_model, save_model, table_one, train
from .harness import ScenarioConfig, load_config, run_scenario, simulate, sweep_buffer
from .monitor import MetricsSnapshot, MonitorConfig
from .sim import SimConfig, SimState, analytic_hit_ratio, che_hit_ratio, execute_query
from .tuner import TunerConfig, TuningDecision
from .workload import WorkloadSpec

__version__ = "0.1.0"

__all__ = [
    "NetConfig", "NeuralModel", "TrainingSet", "load_model", "save_model", "table_one", "train",
    "ScenarioConfig", "load_config", "run_scenario", "simulate", "sweep_buffer",
    "MetricsSnapshot", "MonitorConfig",
    "SimConfig", "SimState", "analytic_hit_ratio", "che_hit_ratio", "execute_query",
    "TunerConfig", "TuningDecision", "WorkloadSpec",
]
