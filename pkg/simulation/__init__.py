# Synthetic latent-factor panels with known signals
from simulation.factor_models import GroundTruth, SimConfig, simulate_panel
from simulation.presets import PRESETS, get_preset, list_presets

__all__ = ["GroundTruth", "PRESETS", "SimConfig", "get_preset", "list_presets", "simulate_panel"]
