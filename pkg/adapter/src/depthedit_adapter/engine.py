"""Diffusion generation engine: DDIM inversion/sampling and masked inpainting.

Undistortion replaces forward noising with deterministic DDIM inversion up
to the requested noise rung, then samples back with a stochastic standard
deviation applied only inside the foreground mask; outside the mask the
reverse pass is the deterministic inverse of the inversion, which is what
preserves appearance. Inpainting runs classifier-free-guided sampling with
masked latent compositing against the noised known region.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np
import torch

from depthedit.oracle.protocol import UndistortRequest

from .backend import text_embedding
from .lora import AdaptationState, activate, attach_lora, tune_adaptation
from .manifest import Manifest
from .schedule import DdimSchedule


def _to_latent_mask(mask: np.ndarray | None, latent_hw, fill: float = 1.0) -> torch.Tensor:
    if mask is None:
        return torch.full((1, 1) + tuple(latent_hw), fill)
    m = torch.from_numpy(np.ascontiguousarray(mask, dtype=np.float32))
    m = m.unsqueeze(0).unsqueeze(0)
    return torch.nn.functional.adaptive_avg_pool2d(m, tuple(latent_hw))


def _depth_channel(depth_hint: np.ndarray | None, latent_hw) -> torch.Tensor | None:
    if depth_hint is None:
        return None
    d = torch.from_numpy(np.ascontiguousarray(depth_hint, dtype=np.float32))
    d = torch.where(torch.isfinite(d), d, torch.zeros_like(d))
    d = d / (1.0 + d)  # squash metric depth into [0, 1)
    d = d.unsqueeze(0).unsqueeze(0)
    return torch.nn.functional.adaptive_avg_pool2d(d, tuple(latent_hw))


class DiffusionEngine:
    """Owns the backend, the adaptation store, and both samplers.

    One generation runs at a time (the device is single-slot); requests
    serialize on an internal lock.
    """

    def __init__(self, backend, manifest: Manifest):
        self.backend = backend
        self.manifest = manifest
        self.undistort_schedule = DdimSchedule(manifest.undistort.steps)
        self.inpaint_schedule = DdimSchedule(manifest.inpaint.steps)
        self.lora_layers = attach_lora(backend.attention_modules()["attention"],
                                       manifest.lora)
        self.adaptations: dict[str, AdaptationState] = {}
        self._lock = threading.Lock()
        self._waiters = 0
        self._waiters_lock = threading.Lock()

    def queue_depth(self) -> int:
        """Requests currently queued behind the single generation slot."""
        with self._waiters_lock:
            return self._waiters

    @contextmanager
    def _generation_slot(self):
        with self._waiters_lock:
            self._waiters += 1
        self._lock.acquire()
        with self._waiters_lock:
            self._waiters -= 1
        try:
            yield
        finally:
            self._lock.release()

    # -- adaptation ----------------------------------------------------------

    def tune(self, image: np.ndarray, session_id: str, caption: str) -> str:
        with self._generation_slot():
            embed = text_embedding(caption)
            state = tune_adaptation(self.backend, self.undistort_schedule,
                                    self.lora_layers, image, embed,
                                    self.manifest.lora, session_id)
            state.text_embed = embed
            self.adaptations[session_id] = state
            activate(self.lora_layers, None)
            return state.handle

    def _activate_session(self, session_id: str | None) -> torch.Tensor:
        state = self.adaptations.get(session_id) if session_id else None
        activate(self.lora_layers, state)
        if state is not None:
            return state.text_embed
        return torch.zeros(16)

    # -- undistortion ----------------------------------------------------------

    def undistort(self, request: UndistortRequest) -> np.ndarray:
        image = np.asarray(request.image, dtype=np.float32)
        if request.max_noise_level == 0.0:
            return image.copy()  # protocol contract: bit-exact identity
        with self._generation_slot():
            schedule = self.undistort_schedule
            guidance = self.manifest.undistort.guidance
            rung_top = schedule.rung_for_noise_level(request.max_noise_level)
            text = self._activate_session(request.session_id)

            z = self.backend.encode(image)
            latent_hw = z.shape[2:]
            eta_map = _to_latent_mask(request.foreground_mask, latent_hw, fill=1.0)
            eta_map = eta_map * self.manifest.undistort_eta_inside

            # Deterministic inversion up the ladder (guidance 1: pure conditional).
            for rung in range(1, rung_top + 1):
                eps = self.backend.predict_noise(z, schedule, rung - 1, text, guidance=1.0)
                a_prev, s_prev = schedule.coeffs(rung - 1)
                a_t, s_t = schedule.coeffs(rung)
                x0 = (z - s_prev * eps) / a_prev
                z = a_t * x0 + s_t * eps

            gen = torch.Generator().manual_seed(request.seed or 0)
            for rung in range(rung_top, 0, -1):
                eps = self.backend.predict_noise(z, schedule, rung, text, guidance=guidance)
                a_t, s_t = schedule.coeffs(rung)
                a_prev, _ = schedule.coeffs(rung - 1)
                x0 = (z - s_t * eps) / a_t
                sigma_full = schedule.ddim_sigma(rung, rung - 1)
                sigma_map = sigma_full * eta_map
                dir_coeff = torch.sqrt(torch.clamp(
                    (1.0 - a_prev ** 2) - sigma_map ** 2, min=0.0))
                noise = torch.randn(z.shape, generator=gen)
                z = a_prev * x0 + dir_coeff * eps + sigma_map * noise
            activate(self.lora_layers, None)
            return self.backend.decode(z)

    # -- inpainting ------------------------------------------------------------

    def inpaint(self, image: np.ndarray, hole_mask: np.ndarray,
                depth_hint: np.ndarray | None = None, prompt: str | None = None,
                seed: int = 0) -> np.ndarray:
        image = np.asarray(image, dtype=np.float32)
        hole = np.asarray(hole_mask, dtype=bool)
        if not hole.any():
            return image.copy()
        with self._generation_slot():
            schedule = self.inpaint_schedule
            guidance = self.manifest.inpaint.guidance
            activate(self.lora_layers, None)
            text = text_embedding(prompt)

            z_known = self.backend.encode(image)
            latent_hw = z_known.shape[2:]
            mask_latent = _to_latent_mask(hole.astype(np.float32), latent_hw)
            depth = _depth_channel(depth_hint, latent_hw)

            gen = torch.Generator().manual_seed(seed)
            top = schedule.sample_steps
            a_top, s_top = schedule.coeffs(top)
            z = a_top * z_known + s_top * torch.randn(z_known.shape, generator=gen)
            for rung in range(top, 0, -1):
                eps = self.backend.predict_noise(z, schedule, rung, text,
                                                 depth_hint=depth, guidance=guidance)
                a_t, s_t = schedule.coeffs(rung)
                a_prev, s_prev = schedule.coeffs(rung - 1)
                x0 = (z - s_t * eps) / a_t
                z_gen = a_prev * x0 + s_prev * eps
                z_keep = a_prev * z_known + s_prev * torch.randn(z_known.shape, generator=gen)
                z = mask_latent * z_gen + (1.0 - mask_latent) * z_keep

            out = self.backend.decode(z)
            # Latent compositing protects the exterior up to codec error; the
            # pixel paste makes the protocol guarantee exact.
            out[~hole] = image[~hole]
            return out
