"""Visible-light joint communication and indoor positioning simulator.

Deterministic, seedable link-level models: Lambertian/Rician optical channel,
spatial-modulation M-PAM frames under zone dimming, pilot-aided LS joint
estimation, joint ML detection, and RSS radical-axis positioning in 2-D/3-D,
plus a Monte Carlo harness and CLI for the standard experiment sweeps.
"""

from . import channel, cli, harness, modem, positioning, receiver, scene
from .errors import VlcJcpError
from .scene import ScenarioConfig, Vec3, load_scenario, load_scenario_file

__version__ = "0.1.0"

__all__ = [
    "channel",
    "cli",
    "harness",
    "modem",
    "positioning",
    "receiver",
    "scene",
    "VlcJcpError",
    "ScenarioConfig",
    "Vec3",
    "load_scenario",
    "load_scenario_file",
    "__version__",
]
