"""Live generative-oracle adapter for depthedit."""

from .manifest import LoraSettings, Manifest, SamplerSettings
from .oracle_impl import AdapterOracle

__all__ = ["AdapterOracle", "Manifest", "LoraSettings", "SamplerSettings"]
