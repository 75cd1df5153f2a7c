"""
Named simulation settings.

hyper-*       bottleneck/epoch study: m=1, n=1000, p=500, s=10, A=10
compare-*     amplitude study at p=500 and p=1000
subjects-*    multi-subject study (m is varied by the sweep)
desk-*        reduced size for laptop runs: n=400, p=100
"""

import dataclasses
from typing import Dict, List

from simulation.factor_models import FACTOR_MODELS, LINKS, SimConfig
from utils.exceptions import ConfigError


def _build_presets() -> Dict[str, SimConfig]:
    presets = {}
    for factor_model in FACTOR_MODELS:
        for link in LINKS:
            combo = f"{factor_model}-{link}"
            base = SimConfig(factor_model=factor_model, link=link)
            presets[f"hyper-{combo}"] = base
            presets[f"hyper-{combo}-confounded"] = dataclasses.replace(base, confounders=True)
            presets[f"compare-{combo}-p500"] = dataclasses.replace(base, p=500)
            presets[f"compare-{combo}-p1000"] = dataclasses.replace(base, p=1000)
            presets[f"subjects-{combo}"] = base
            presets[f"desk-{combo}"] = dataclasses.replace(base, n=400, p=100)
            presets[f"desk-{combo}-confounded"] = dataclasses.replace(base, n=400, p=100, confounders=True)
    presets["desk-null"] = SimConfig(n=400, p=100, s=0)
    return presets


PRESETS: Dict[str, SimConfig] = _build_presets()


def list_presets() -> List[str]:
    return sorted(PRESETS)


def get_preset(name: str, **overrides) -> SimConfig:
    """Copy of a preset with field overrides applied"""
    if name not in PRESETS:
        raise ConfigError(f"Unknown preset '{name}'. Available: {', '.join(list_presets())}")
    try:
        config = dataclasses.replace(PRESETS[name], **overrides)
    except TypeError as e:
        raise ConfigError(f"Invalid override for preset '{name}': {e}")
    return config.validate()
