"""Multi-AP OFDM collaborative sensing: simulation, Bayesian probability fusion and baselines."""

from .fusion import PriorBox, fused_position_objective, fused_velocity_objective, observe
from .geometry import ApPair, Scene, bistatic_range, bistatic_speed
from .scene import ReceivedFrame, SnrModel, synthesize_frames
from .solvers import Estimate, GridSpec, PcgaParams, pcga_estimate, traversal_estimate
from .waveform import OfdmConfig

__all__ = [
    "ApPair", "Estimate", "GridSpec", "OfdmConfig", "PcgaParams", "PriorBox", "ReceivedFrame",
    "Scene", "SnrModel", "bistatic_range", "bistatic_speed", "fused_position_objective",
    "fused_velocity_objective", "observe", "pcga_estimate", "synthesize_frames",
    "traversal_estimate",
]
__version__ = "0.1.0"
