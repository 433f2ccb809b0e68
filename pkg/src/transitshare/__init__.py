"""Dynamic ridesharing with integrated transit transfers.

Library and CLI for simulating a mobility-on-demand fleet that can hand
passengers over to a scheduled transit network (and back), with anticipatory
dispatch, queue-constrained idle-vehicle relocation, online rate learning
and a reproducible experiment harness.
"""

__version__ = "0.1.0"

from .demand import DemandSpec, Request, generate
from .dispatch import DispatchConfig, ServicePlan, plan_service
from .engine import MetricsReport, SimConfig, Simulation, run
from .geometry import Point, TransitNetwork, TravelTimeModel, ZoneGrid
from .scenario import Scenario, bundled_scenario, load_scenario

__all__ = [
    "DemandSpec", "Request", "generate",
    "DispatchConfig", "ServicePlan", "plan_service",
    "MetricsReport", "SimConfig", "Simulation", "run",
    "Point", "TransitNetwork", "TravelTimeModel", "ZoneGrid",
    "Scenario", "bundled_scenario", "load_scenario",
    "__version__",
]
