"""Deadline-aware multi-region spot scheduling: simulator, policies, oracle."""
from .baselines import BaselineConfig, make_baseline
from .engine import RunReport, audit, region_overlap, run, selection_accuracy
from .market import CostLedger, JobSpec
from .oracle import DPSolution, ReplayPolicy, lifetime_oracle, solve
from .policy import SkyNomad, SkyNomadConfig
from .trace import PriceBook, SyntheticTraceSpec, Trace, generate_trace, load_prices, load_trace

__all__ = [
    "BaselineConfig", "CostLedger", "DPSolution", "JobSpec", "PriceBook", "ReplayPolicy",
    "RunReport", "SkyNomad", "SkyNomadConfig", "SyntheticTraceSpec", "Trace", "audit",
    "generate_trace", "lifetime_oracle", "load_prices", "load_trace", "make_baseline",
    "region_overlap", "run", "selection_accuracy", "solve",
]
