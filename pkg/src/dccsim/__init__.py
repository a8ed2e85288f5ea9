"""dccsim: deterministic simulator of data-center congestion control.

Core pieces: an integer-nanosecond event engine, ECN-marking switch queues,
baseline transports (NewReno / DCTCP / UDP CBR / mice), a distributed
hypervisor-to-hypervisor rate-control shim, a centralized controller-driven
variant, and a scenario harness emitting per-flow goodput, FCT, and queue
traces as CSV.
"""

__version__ = "0.1.0"

from .builder import Sim, build
from .config import ConfigError, FlowSpec, Params, ScenarioConfig, TopoSpec
from .engine import EventLoop, Periodic, SchedulingError
from .runner import run_scenario, write_outputs

__all__ = [
    "Sim", "build", "ConfigError", "FlowSpec", "Params", "ScenarioConfig",
    "TopoSpec", "EventLoop", "Periodic", "SchedulingError", "run_scenario",
    "write_outputs", "__version__",
]
