"""Appearance-consistency measurements between the source image and an edit.

The local measurements warp the edited image back onto the source grid
through dense-match flow and compare inside the foreground region; the
global measurement is cosine similarity of oracle embeddings computed on
224x224 downsamples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import DegenerateInputError
from .imgio import to_float, to_uint8
from .oracle.protocol import EMBED, MatchResult, Oracle

CONFIDENCE_THRESHOLD = 0.25
EMBED_SIZE = 224
# Optional capability an adapter may advertise for a learned perceptual metric.
LPIPS_CAPABILITY = "Lpips"


@dataclass(frozen=True)
class ConsistencyReport:
    perceptual_similarity: float | None  # cosine in [-1, 1]; None without Embed
    lpips_proxy: float                   # >= 0; lower is more consistent
    lpips_source: str                    # "oracle" or "warp-back-rmse"
    mean_confidence: float
    confident_area: float
    region_pixels: int

    def to_json(self) -> dict:
        return {
            "perceptual_similarity": self.perceptual_similarity,
            "lpips_proxy": self.lpips_proxy,
            "lpips_source": self.lpips_source,
            "mean_confidence": self.mean_confidence,
            "confident_area": self.confident_area,
            "region_pixels": self.region_pixels,
        }


def confidence_aggregates(match: MatchResult, region: np.ndarray,
                          threshold: float = CONFIDENCE_THRESHOLD):
    """Mean confidence over the region and the fraction above the threshold."""
    region = np.asarray(region, dtype=bool)
    if not region.any():
        raise DegenerateInputError("confidence aggregates need a non-empty region")
    conf = match.confidence[region]
    return float(conf.mean()), float((conf > threshold).mean())


def warp_back(edited: np.ndarray, match: MatchResult):
    """Pull the edited image back onto the source grid through the flow.

    ``match.flow`` lives on the source grid and points into the edited
    frame; output pixel p samples ``edited`` bilinearly at p + flow(p).
    Returns (image, valid_mask); samples outside the frame are invalid.
    """
    edited = to_float(edited)
    h, w = match.flow.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = xx + match.flow[..., 0]
    sy = yy + match.flow[..., 1]
    valid = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)

    sx_c = np.clip(sx, 0, w - 1)
    sy_c = np.clip(sy, 0, h - 1)
    x0 = np.floor(sx_c).astype(np.int64)
    y0 = np.floor(sy_c).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sx_c - x0)[..., None]
    fy = (sy_c - y0)[..., None]
    img = edited.astype(np.float64)
    out = ((1 - fy) * ((1 - fx) * img[y0, x0] + fx * img[y0, x1])
           + fy * ((1 - fx) * img[y1, x0] + fx * img[y1, x1]))
    out[~valid] = 0.0
    return out.astype(np.float32), valid


def _resize_224(image: np.ndarray) -> np.ndarray:
    pil = Image.fromarray(to_uint8(image), mode="RGB")
    return to_float(np.asarray(pil.resize((EMBED_SIZE, EMBED_SIZE), Image.BILINEAR)))


def report(original: np.ndarray, edited: np.ndarray, match: MatchResult,
           region: np.ndarray, oracle: Oracle,
           threshold: float = CONFIDENCE_THRESHOLD) -> ConsistencyReport:
    """Full consistency report for one edit.

    The perceptual similarity uses oracle embeddings when the Embed
    capability is advertised. The detail measurement prefers an oracle
    LPIPS capability and otherwise falls back to the labeled proxy:
    RMSE between the source and the warped-back edit on confidently
    matched region pixels.
    """
    original = to_float(original)
    edited = to_float(edited)
    region = np.asarray(region, dtype=bool)
    mean_conf, confident_area = confidence_aggregates(match, region, threshold)

    capabilities = oracle.capabilities()
    perceptual = None
    if EMBED in capabilities:
        e_src = oracle.embed(_resize_224(original))
        e_edit = oracle.embed(_resize_224(edited))
        perceptual = float(np.dot(e_src, e_edit))

    if LPIPS_CAPABILITY in capabilities:
        lpips = float(oracle.lpips(original, edited))  # adapter extension
        lpips_source = "oracle"
    else:
        warped, valid = warp_back(edited, match)
        confident = region & valid & (match.confidence > threshold)
        if confident.any():
            diff = (warped.astype(np.float64) - original.astype(np.float64))[confident]
            lpips = float(np.sqrt(np.mean(diff ** 2)))
        else:
            # Nothing matched confidently: report the worst case, keep fields finite.
            lpips = 1.0
        lpips_source = "warp-back-rmse"

    return ConsistencyReport(
        perceptual_similarity=perceptual,
        lpips_proxy=lpips,
        lpips_source=lpips_source,
        mean_confidence=mean_conf,
        confident_area=confident_area,
        region_pixels=int(region.sum()),
    )
