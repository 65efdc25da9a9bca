"""Low-rank adaptation on attention projection layers.

Rank-r update y = Wx + (alpha/r) * B(A(x)) attached to the to_q/to_k/to_v
projections. One adaptation is trained per session on the single source
image with a denoising objective and swapped in for that session's
generation calls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .manifest import LoraSettings
from .schedule import DdimSchedule


class LoraLinear(nn.Module):
    """Linear layer with a trainable low-rank residual update."""

    def __init__(self, base: nn.Linear, rank: int, alpha: float | None = None,
                 seed: int = 0):
        super().__init__()
        self.base = base
        for p in self.base.parameters():
            p.requires_grad_(False)
        in_f = base.in_features
        out_f = base.out_features
        self.rank = rank
        self.seed = seed
        self.scale = (alpha if alpha is not None else float(rank)) / rank
        self.down = nn.Parameter(self._fresh_down(in_f))
        self.up = nn.Parameter(torch.zeros(rank, out_f))

    def _fresh_down(self, in_f: int) -> torch.Tensor:
        gen = torch.Generator().manual_seed(self.seed)
        return torch.randn(in_f, self.rank, generator=gen) / self.rank

    def forward(self, x):
        return self.base(x) + self.scale * ((x @ self.down) @ self.up)

    def state(self) -> dict:
        return {"down": self.down.detach().clone(), "up": self.up.detach().clone()}

    def load_state(self, state: dict | None):
        """Load session weights, or reset to the inactive (freshly seeded) state."""
        with torch.no_grad():
            if state is None:
                self.up.zero_()
                self.down.copy_(self._fresh_down(self.down.shape[0]))
            else:
                self.down.copy_(state["down"])
                self.up.copy_(state["up"])


@dataclass
class AdaptationState:
    """Per-session adaptation: weights, conditioning embed, training log."""

    session_id: str
    handle: str
    weights: dict
    losses: list = field(default_factory=list)
    text_embed: torch.Tensor | None = None


def attach_lora(attention: nn.Module, settings: LoraSettings) -> dict[str, LoraLinear]:
    """Replace the configured projection layers with LoRA wrappers in place."""
    wrapped = {}
    for idx, name in enumerate(settings.targets):
        base = getattr(attention, name)
        if isinstance(base, LoraLinear):
            wrapped[name] = base
            continue
        layer = LoraLinear(base, rank=settings.rank, seed=idx)
        setattr(attention, name, layer)
        wrapped[name] = layer
    return wrapped


def tune_adaptation(backend, schedule: DdimSchedule, layers: dict[str, LoraLinear],
                    image: np.ndarray, text_embed: torch.Tensor,
                    settings: LoraSettings, session_id: str,
                    seed: int = 0) -> AdaptationState:
    """Train the low-rank update on one image with the denoising objective.

    Each step draws ``batch_size`` (rung, noise) samples, corrupts the
    encoded image to those rungs, and regresses the injected noise.
    """
    for layer in layers.values():
        layer.load_state(None)
    params = [p for layer in layers.values() for p in (layer.down, layer.up)]
    for p in params:
        p.requires_grad_(True)
    optimizer = torch.optim.Adam(params, lr=settings.learning_rate)
    gen = torch.Generator().manual_seed(seed)

    z0 = backend.encode(image)
    losses = []
    for _ in range(settings.steps):
        rung = int(torch.randint(1, schedule.sample_steps + 1, (1,), generator=gen))
        a, s = schedule.coeffs(rung)
        batch0 = z0.expand(settings.batch_size, -1, -1, -1)
        noise = torch.randn(batch0.shape, generator=gen)
        noisy = a * batch0 + s * noise
        pred = backend.predict_noise_train(noisy, schedule, rung, text_embed)
        loss = torch.mean((pred - noise) ** 2)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        losses.append(float(loss.detach()))

    weights = {name: layer.state() for name, layer in layers.items()}
    for p in params:
        p.requires_grad_(False)
    return AdaptationState(session_id=session_id, handle=f"lora-{session_id}",
                           weights=weights, losses=losses)


def activate(layers: dict[str, LoraLinear], state: AdaptationState | None):
    """Load a session's weights into the wrappers (or reset to inactive)."""
    for name, layer in layers.items():
        layer.load_state(None if state is None else state.weights.get(name))
