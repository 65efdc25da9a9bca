"""Diffusion backends: latent codec plus conditional noise prediction.

The backend contract is small on purpose: encode/decode between images and
latents, and predict noise given a latent, a ladder rung, text conditioning
and an optional depth hint. Real checkpoints plug in behind the same
interface; the builtin backend is a tiny fixed-seed torch network whose
attention projections carry the standard to_q/to_k/to_v names so low-rank
adaptation attaches exactly as it would on a full model.
"""

from __future__ import annotations

import hashlib

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .schedule import DdimSchedule

LATENT_DOWNSCALE = 2
_EMBED_DIM = 16


class BackendLoadError(RuntimeError):
    """The configured model cannot be loaded; its capability is withdrawn."""


def text_embedding(prompt: str | None, dim: int = _EMBED_DIM) -> torch.Tensor:
    """Deterministic pseudo-embedding of conditioning text (hash-seeded)."""
    if not prompt:
        return torch.zeros(dim)
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "little") % (2 ** 31)
    gen = torch.Generator().manual_seed(seed)
    vec = torch.randn(dim, generator=gen)
    return vec / vec.norm()


class AttentionBlock(nn.Module):
    """Single-head self-attention over pooled latent tokens.

    Tokens are an adaptive 16x16 pooling of the feature map; the output is
    upsampled back and added as a residual. Projection layers use the
    conventional to_q/to_k/to_v/to_out names targeted by adaptation.
    """

    def __init__(self, channels: int, tokens: int = 16):
        super().__init__()
        self.tokens = tokens
        self.to_q = nn.Linear(channels, channels, bias=False)
        self.to_k = nn.Linear(channels, channels, bias=False)
        self.to_v = nn.Linear(channels, channels, bias=False)
        self.to_out = nn.Linear(channels, channels, bias=False)

    def forward(self, x):
        b, c, h, w = x.shape
        grid = F.adaptive_avg_pool2d(x, (self.tokens, self.tokens))
        seq = grid.flatten(2).transpose(1, 2)  # (b, tokens^2, c)
        q, k, v = self.to_q(seq), self.to_k(seq), self.to_v(seq)
        attn = torch.softmax(q @ k.transpose(1, 2) / (c ** 0.5), dim=-1)
        out = self.to_out(attn @ v)
        out = out.transpose(1, 2).reshape(b, c, self.tokens, self.tokens)
        return x + F.interpolate(out, size=(h, w), mode="bilinear", align_corners=False)


class ToyNoisePredictor(nn.Module):
    """Small deterministic conditional network standing in for a diffusion UNet.

    Inputs: latent (3ch), depth hint (1ch), timestep embedding and text
    embedding broadcast as channels. Output magnitude is kept small so the
    probability-flow ODE is nearly linear and DDIM inversion is tight.
    """

    def __init__(self, channels: int = 16, seed: int = 1234):
        super().__init__()
        torch.manual_seed(seed)
        self.stem = nn.Conv2d(3 + 1 + 2, channels, kernel_size=3, padding=1)
        self.attention = AttentionBlock(channels)
        self.mid = nn.Conv2d(channels, channels, kernel_size=3, padding=1)
        self.head = nn.Conv2d(channels, 3, kernel_size=3, padding=1)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, latent, t_embed, text_embed, depth_hint):
        b, _, h, w = latent.shape
        t_map = torch.tanh(t_embed @ torch.linspace(-1, 1, _EMBED_DIM)).reshape(b, 1, 1, 1)
        t_chan = t_map.expand(b, 1, h, w)
        c_map = torch.tanh(text_embed @ torch.linspace(1, -1, _EMBED_DIM)).reshape(b, 1, 1, 1)
        c_chan = c_map.expand(b, 1, h, w)
        if depth_hint is None:
            depth_hint = torch.zeros(b, 1, h, w)
        x = torch.cat([latent, depth_hint, t_chan, c_chan], dim=1)
        x = F.silu(self.stem(x))
        x = self.attention(x)
        x = F.silu(self.mid(x))
        return 0.05 * torch.tanh(self.head(x))


class ToyLatentBackend:
    """Self-contained deterministic backend (``builtin:toy-latent-v1``).

    The latent codec is a 2x area downsample with bilinear decoding: mildly
    lossy, which gives reconstruction tests a measurable codec floor just
    like a real autoencoder.
    """

    name = "builtin:toy-latent-v1"

    def __init__(self, seed: int = 1234):
        self.model = ToyNoisePredictor(seed=seed)
        self.model.eval()

    # -- codec ---------------------------------------------------------------

    def encode(self, image: np.ndarray) -> torch.Tensor:
        x = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))
        x = x.permute(2, 0, 1).unsqueeze(0)
        z = F.avg_pool2d(x, LATENT_DOWNSCALE)
        return 2.0 * z - 1.0

    def decode(self, latent: torch.Tensor) -> np.ndarray:
        x = (latent + 1.0) / 2.0
        x = F.interpolate(x, scale_factor=LATENT_DOWNSCALE, mode="bilinear",
                          align_corners=False)
        out = x.squeeze(0).permute(1, 2, 0).clamp(0.0, 1.0)
        return out.numpy().astype(np.float32)

    def latent_size(self, image_shape) -> tuple[int, int]:
        return (image_shape[0] // LATENT_DOWNSCALE, image_shape[1] // LATENT_DOWNSCALE)

    # -- prediction ----------------------------------------------------------

    def predict_noise(self, latent: torch.Tensor, schedule: DdimSchedule, rung: int,
                      text_embed: torch.Tensor, depth_hint: torch.Tensor | None = None,
                      guidance: float = 1.0) -> torch.Tensor:
        b = latent.shape[0]
        t_embed = schedule.timestep_embedding(rung).expand(b, -1)
        with torch.no_grad():
            cond = self.model(latent, t_embed, text_embed.expand(b, -1), depth_hint)
            if guidance == 1.0:
                return cond
            uncond = self.model(latent, t_embed, torch.zeros(b, _EMBED_DIM), depth_hint)
        return uncond + guidance * (cond - uncond)

    def predict_noise_train(self, latent, schedule, rung, text_embed, depth_hint=None):
        """Training-mode prediction (gradients flow into attached adapters)."""
        b = latent.shape[0]
        t_embed = schedule.timestep_embedding(rung).expand(b, -1)
        return self.model(latent, t_embed, text_embed.expand(b, -1), depth_hint)

    def attention_modules(self) -> dict:
        return {"attention": self.model.attention}


def load_diffusion_backend(spec: str) -> ToyLatentBackend:
    """Resolve a manifest diffusion-model spec to a backend instance.

    ``builtin:`` specs are constructed locally; anything else must be a
    loadable checkpoint, and failure raises :class:`BackendLoadError` so the
    caller withdraws the capability instead of crashing.
    """
    if spec == ToyLatentBackend.name:
        return ToyLatentBackend()
    if spec.startswith("builtin:"):
        raise BackendLoadError(f"unknown builtin diffusion backend {spec!r}")
    try:  # real checkpoints arrive via optional heavyweight dependencies
        import diffusers  # noqa: F401
    except ImportError as exc:
        raise BackendLoadError(f"cannot load {spec!r}: diffusers unavailable ({exc})")
    raise BackendLoadError(f"checkpoint loading for {spec!r} is not configured on this host")
