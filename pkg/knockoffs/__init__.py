# Knockoff construction: LSTM autoencoder reconstruction plus regenerated noise
from knockoffs.autoencoder import LstmAutoencoder, train_autoencoder
from knockoffs.generator import (
    KnockoffGenerator,
    KnockoffResult,
    estimate_noise_variance,
    exchangeability_diagnostic,
    generate_knockoffs,
    knockoff_panel,
    sample_knockoffs,
)

__all__ = [
    "KnockoffGenerator",
    "KnockoffResult",
    "LstmAutoencoder",
    "estimate_noise_variance",
    "exchangeability_diagnostic",
    "generate_knockoffs",
    "knockoff_panel",
    "sample_knockoffs",
    "train_autoencoder",
]
