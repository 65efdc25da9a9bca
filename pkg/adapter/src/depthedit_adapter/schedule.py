"""DDIM noise schedule shared by inversion and sampling.

A scaled-linear beta schedule over 1000 training steps, subsampled to a
fixed ladder of sampling steps. A max-noise-level sigma in [0, 1] maps to
rung floor(sigma * steps): 1 means the chain start (pure noise), 0 the
chain end (clean image). Inversion climbs the same ladder the sampler
descends, so the two are consistent by construction.
"""

from __future__ import annotations

import numpy as np
import torch

TRAIN_STEPS = 1000
BETA_START = 0.00085
BETA_END = 0.012


class DdimSchedule:
    def __init__(self, sample_steps: int, train_steps: int = TRAIN_STEPS):
        self.sample_steps = int(sample_steps)
        betas = np.linspace(BETA_START ** 0.5, BETA_END ** 0.5, train_steps) ** 2
        alphas_cumprod = np.cumprod(1.0 - betas)
        # Ladder rung r (1-based) uses training timestep t_r; rung 0 is the
        # clean image with alpha_bar = 1.
        idx = np.linspace(0, train_steps - 1, self.sample_steps).round().astype(int)
        self.alpha_bar = np.concatenate([[1.0], alphas_cumprod[idx]])
        self.timesteps = np.concatenate([[-1], idx])

    def rung_for_noise_level(self, sigma: float) -> int:
        """Discrete ladder rung floor(sigma * steps), clamped to the ladder."""
        rung = int(np.floor(sigma * self.sample_steps))
        return max(0, min(rung, self.sample_steps))

    def coeffs(self, rung: int) -> tuple[float, float]:
        """(sqrt(alpha_bar), sqrt(1 - alpha_bar)) at a ladder rung."""
        a = float(self.alpha_bar[rung])
        return a ** 0.5, (1.0 - a) ** 0.5

    def ddim_sigma(self, rung_from: int, rung_to: int) -> float:
        """Stochastic std for a fully stochastic (eta=1) step down the ladder."""
        a_t = float(self.alpha_bar[rung_from])
        a_prev = float(self.alpha_bar[rung_to])
        if a_t >= 1.0:
            return 0.0
        return float(np.sqrt((1 - a_prev) / (1 - a_t)) * np.sqrt(1 - a_t / a_prev))

    def timestep_embedding(self, rung: int, dim: int = 16) -> torch.Tensor:
        """Sinusoidal embedding of the rung's training timestep."""
        t = float(max(self.timesteps[rung], 0))
        freqs = torch.exp(torch.linspace(0.0, 6.0, dim // 2) * -1.0)
        angles = t * freqs
        return torch.cat([torch.sin(angles), torch.cos(angles)])
