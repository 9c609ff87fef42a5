"""Mesh NoC simulator with per-link bit-transition accounting."""

from .mesh import (ConfigError, Direction, MeshConfig, Network, build_mesh, default_mc_positions,
                   xy_route)
from .sim import (SimConfig, SimReport, SimResult, SimulationTimeout, record_link_traversal,
                  replay_link_log, simulate, verify_replay)
from .traffic import LayerSchedule, Packet, map_layer_traffic

__all__ = [
    "ConfigError", "Direction", "MeshConfig", "Network", "build_mesh", "default_mc_positions",
    "xy_route", "SimConfig", "SimReport", "SimResult", "SimulationTimeout",
    "record_link_traversal", "replay_link_log", "simulate", "verify_replay",
    "LayerSchedule", "Packet", "map_layer_traffic",
]
