"""Deterministic simulator of cluster scheduling and parallel process launch."""

from .cluster import AllocationFailure, AppImage, CentralFS, Cluster, NodeSpec
from .launchmodel import (
    CriticalPath,
    LaunchMode,
    LaunchRecord,
    TimingModel,
    dispatch_depth,
)
from .sched import (
    Job,
    JobArray,
    JobState,
    Policy,
    RejectReason,
    Reservation,
    Scheduler,
    SchedulerConfig,
    SyncParallel,
)
from .simcore import Engine, Event, EventKind, SimTime, SimulationError, us_from_s
from .workload import Scenario, ScenarioError, builtin, load_scenario, serialize

__version__ = "0.1.0"

__all__ = [
    "AllocationFailure", "AppImage", "CentralFS", "Cluster", "NodeSpec",
    "CriticalPath", "LaunchMode", "LaunchRecord", "TimingModel", "dispatch_depth",
    "Job", "JobArray", "JobState", "Policy", "RejectReason", "Reservation",
    "Scheduler", "SchedulerConfig", "SyncParallel",
    "Engine", "Event", "EventKind", "SimTime", "SimulationError", "us_from_s",
    "Scenario", "ScenarioError", "builtin", "load_scenario", "serialize",
    "__version__",
]
