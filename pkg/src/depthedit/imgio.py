"""Image and array serialization: PNG codecs, raw float32 + JSON sidecar, base64 wrappers.

Images travel through the package as float32 RGB arrays in [0, 1] of shape
(H, W, 3); masks as bool arrays of shape (H, W). PNG is the interchange
format for images and masks, raw little-endian float32 with a JSON sidecar
for depth/disparity grids.
"""

from __future__ import annotations

import base64
import io
import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidInputError


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Quantize a float image in [0,1] to uint8 with round-half-away behavior."""
    img = np.asarray(image)
    if img.dtype == np.uint8:
        return img
    return np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)


def to_float(image: np.ndarray) -> np.ndarray:
    """Promote a uint8 image to float32 in [0,1]; float input passes through as float32."""
    img = np.asarray(image)
    if img.dtype == np.uint8:
        return img.astype(np.float32) / 255.0
    return img.astype(np.float32)


def encode_png(image: np.ndarray, fast: bool = False) -> bytes:
    """Serialize an RGB image or a single-channel mask/grayscale array to PNG bytes.

    ``fast`` trades compression ratio for encode speed (interactive previews).
    """
    img = np.asarray(image)
    if img.dtype == np.bool_:
        arr = (img.astype(np.uint8)) * 255
        mode = "L"
    elif img.ndim == 2:
        arr = to_uint8(img)
        mode = "L"
    elif img.ndim == 3 and img.shape[2] == 3:
        arr = to_uint8(img)
        mode = "RGB"
    else:
        raise InvalidInputError(f"cannot encode array of shape {img.shape} as PNG")
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG",
                                         compress_level=1 if fast else 6)
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    """Decode PNG bytes to float32 RGB in [0,1] (grayscale stays 2D)."""
    img = Image.open(io.BytesIO(data))
    if img.mode in ("L", "1", "I;16"):
        arr = np.asarray(img.convert("L"), dtype=np.float32) / 255.0
        return arr
    arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return arr


def decode_mask_png(data: bytes) -> np.ndarray:
    """Decode a PNG into a boolean mask (any channel > 0.5)."""
    arr = decode_png(data)
    if arr.ndim == 3:
        arr = arr.max(axis=2)
    return arr > 0.5


def png_b64(image: np.ndarray) -> str:
    return base64.b64encode(encode_png(image)).decode("ascii")


def b64_png(data: str) -> np.ndarray:
    return decode_png(base64.b64decode(data))


def b64_mask(data: str) -> np.ndarray:
    return decode_mask_png(base64.b64decode(data))


def float32_b64(array: np.ndarray) -> dict:
    """Pack a float32 array as {"shape", "data"} with base64 little-endian payload."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    return {"shape": list(arr.shape),
            "data": base64.b64encode(arr.tobytes()).decode("ascii")}


def b64_float32(obj: dict) -> np.ndarray:
    shape = tuple(int(s) for s in obj["shape"])
    raw = base64.b64decode(obj["data"])
    arr = np.frombuffer(raw, dtype="<f4").reshape(shape)
    return arr.astype(np.float32)


def save_f32(path, array: np.ndarray, kind: str = "depth") -> None:
    """Write raw little-endian float32 plus a JSON sidecar describing the grid."""
    path = Path(path)
    arr = np.ascontiguousarray(array, dtype="<f4")
    path.write_bytes(arr.tobytes())
    sidecar = {"width": int(arr.shape[1]), "height": int(arr.shape[0]),
               "dtype": "float32", "order": "row-major", "kind": kind}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2), encoding="utf-8")


def load_f32(path) -> np.ndarray:
    path = Path(path)
    sidecar = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
    h, w = int(sidecar["height"]), int(sidecar["width"])
    arr = np.frombuffer(path.read_bytes(), dtype="<f4").reshape(h, w)
    return arr.astype(np.float32)


def save_png(path, image: np.ndarray) -> None:
    Path(path).write_bytes(encode_png(image))


def load_png(path) -> np.ndarray:
    return decode_png(Path(path).read_bytes())


def load_mask(path) -> np.ndarray:
    return decode_mask_png(Path(path).read_bytes())


def psnr(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Peak signal-to-noise ratio in dB between two float images in [0,1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if mask is not None:
        diff = (a - b)[mask]
    else:
        diff = a - b
    mse = float(np.mean(diff ** 2))
    if mse == 0:
        return float("inf")
    return -10.0 * np.log10(mse)
