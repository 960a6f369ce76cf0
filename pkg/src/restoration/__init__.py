"""Critical load restoration with coordinated microgrids and distributed sources."""

from .engine import EngineConfig, RestorationPlan, solve_island, solve_restoration
from .netmodel import EventSpec, Network, apply_event, load_event, load_feeder, parse_feeder, validate_network
from .topology import find_target_islands, minimum_diameter_spanning_tree

__all__ = [
    "EngineConfig",
    "EventSpec",
    "Network",
    "RestorationPlan",
    "apply_event",
    "find_target_islands",
    "load_event",
    "load_feeder",
    "minimum_diameter_spanning_tree",
    "parse_feeder",
    "solve_island",
    "solve_restoration",
    "validate_network",
]
