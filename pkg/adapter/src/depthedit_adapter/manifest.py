"""Model manifest: which checkpoints back each capability, plus hyperparameters.

Checkpoints are configuration, never code. The ``builtin:`` scheme selects
deterministic self-contained backends so the adapter runs (and its protocol
conformance suite passes) on machines without model weights; production
manifests point the same fields at real checkpoint identifiers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path


@dataclass(frozen=True)
class LoraSettings:
    rank: int = 16
    targets: tuple = ("to_q", "to_k", "to_v")
    learning_rate: float = 5e-4
    batch_size: int = 4
    steps: int = 60

    def to_json(self) -> dict:
        return {"rank": self.rank, "targets": list(self.targets),
                "learning_rate": self.learning_rate,
                "batch_size": self.batch_size, "steps": self.steps}


@dataclass(frozen=True)
class SamplerSettings:
    guidance: float
    steps: int

    def to_json(self) -> dict:
        return {"guidance": self.guidance, "steps": self.steps}


@dataclass(frozen=True)
class Manifest:
    """Everything the adapter needs to assemble its capability set."""

    diffusion_model: str = "builtin:toy-latent-v1"
    depth_model: str = "builtin:constant"
    matcher_model: str = "builtin:zero-flow"
    caption_model: str = "builtin:fixed"
    embed_model: str = "builtin:luminance"
    lora: LoraSettings = field(default_factory=LoraSettings)
    inpaint: SamplerSettings = field(default_factory=lambda: SamplerSettings(4.0, 25))
    undistort: SamplerSettings = field(default_factory=lambda: SamplerSettings(1.0, 50))
    # Stochastic perturbation strength inside the foreground mask during
    # undistortion; outside the mask the sampler stays deterministic.
    undistort_eta_inside: float = 1.0

    def to_json(self) -> dict:
        return {
            "diffusion_model": self.diffusion_model,
            "depth_model": self.depth_model,
            "matcher_model": self.matcher_model,
            "caption_model": self.caption_model,
            "embed_model": self.embed_model,
            "lora": self.lora.to_json(),
            "inpaint": self.inpaint.to_json(),
            "undistort": self.undistort.to_json(),
            "undistort_eta_inside": self.undistort_eta_inside,
        }

    @staticmethod
    def from_json(obj: dict) -> "Manifest":
        lora = LoraSettings(
            rank=int(obj.get("lora", {}).get("rank", 16)),
            targets=tuple(obj.get("lora", {}).get("targets", ("to_q", "to_k", "to_v"))),
            learning_rate=float(obj.get("lora", {}).get("learning_rate", 5e-4)),
            batch_size=int(obj.get("lora", {}).get("batch_size", 4)),
            steps=int(obj.get("lora", {}).get("steps", 60)),
        )
        inpaint = SamplerSettings(**obj.get("inpaint", {"guidance": 4.0, "steps": 25}))
        undistort = SamplerSettings(**obj.get("undistort", {"guidance": 1.0, "steps": 50}))
        return Manifest(
            diffusion_model=obj.get("diffusion_model", "builtin:toy-latent-v1"),
            depth_model=obj.get("depth_model", "builtin:constant"),
            matcher_model=obj.get("matcher_model", "builtin:zero-flow"),
            caption_model=obj.get("caption_model", "builtin:fixed"),
            embed_model=obj.get("embed_model", "builtin:luminance"),
            lora=lora, inpaint=inpaint, undistort=undistort,
            undistort_eta_inside=float(obj.get("undistort_eta_inside", 1.0)),
        )

    @staticmethod
    def load(path) -> "Manifest":
        return Manifest.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    @staticmethod
    def default() -> "Manifest":
        text = resources.files("depthedit_adapter").joinpath("default_manifest.json").read_text()
        return Manifest.from_json(json.loads(text))
