"""Small image helpers shared by the backend and the pipeline.

Images are numpy arrays in HWC layout with float values in [0, 1]. Grayscale
images may be (H, W) or (H, W, 1).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def ensure_hwc(image: np.ndarray) -> np.ndarray:
    """Return the image as a float64 (H, W, C) array."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"expected a 2D or 3D image array, got shape {arr.shape}")
    return arr


def load_image(path: str | Path, channels: int = 3) -> np.ndarray:
    """Load an image file as float64 (H, W, channels) in [0, 1].

    PNG/JPEG and friends go through PIL; ``.npy`` files are loaded directly
    and must already be HWC float data in [0, 1].
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"image file not found: {path}")
    if path.suffix == ".npy":
        arr = ensure_hwc(np.load(path))
        if arr.min() < -1e-9 or arr.max() > 1.0 + 1e-9:
            raise ValueError(f"{path}: .npy image values must lie in [0, 1]")
        arr = np.clip(arr, 0.0, 1.0)
    else:
        from PIL import Image

        with Image.open(path) as im:
            im = im.convert("L" if channels == 1 else "RGB")
            arr = np.asarray(im, dtype=np.float64) / 255.0
        arr = ensure_hwc(arr)
    if arr.shape[2] == 1 and channels == 3:
        arr = np.repeat(arr, 3, axis=2)
    elif arr.shape[2] == 3 and channels == 1:
        arr = arr.mean(axis=2, keepdims=True)
    elif arr.shape[2] != channels:
        raise ValueError(f"{path}: cannot adapt {arr.shape[2]} channels to {channels}")
    return arr


def to_uint8(image01: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(image01) * 255.0), 0, 255).astype(np.uint8)


def save_png(image01: np.ndarray, path: str | Path) -> None:
    from PIL import Image

    arr = to_uint8(ensure_hwc(image01))
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr).save(path)


def bilinear_coords(n_out: int, n_in: int) -> np.ndarray:
    """Source coordinates for align-corners bilinear resampling."""
    if n_out == 1 or n_in == 1:
        return np.zeros(n_out)
    return np.arange(n_out) * (n_in - 1) / (n_out - 1)


def bilinear_resize(data: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Align-corners bilinear resize of an (h, w, c) array to (target_h, target_w, c)."""
    th, tw = int(target[0]), int(target[1])
    if th < 1 or tw < 1:
        raise ValueError(f"target dimensions must be >= 1, got {(th, tw)}")
    data = np.asarray(data, dtype=np.float64)
    squeeze = data.ndim == 2
    if squeeze:
        data = data[:, :, None]
    h, w, _ = data.shape
    if (h, w) == (th, tw):
        out = data.copy()
        return out[:, :, 0] if squeeze else out

    ys = bilinear_coords(th, h)
    xs = bilinear_coords(tw, w)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]

    top = data[y0][:, x0] * (1.0 - fx) + data[y0][:, x1] * fx
    bottom = data[y1][:, x0] * (1.0 - fx) + data[y1][:, x1] * fx
    out = top * (1.0 - fy) + bottom * fy
    return out[:, :, 0] if squeeze else out


def nearest_resize_mask(mask: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resize of a boolean (h, w) mask."""
    th, tw = int(target[0]), int(target[1])
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    if (h, w) == (th, tw):
        return mask.copy()
    rows = np.minimum(np.rint(bilinear_coords(th, h)).astype(np.intp), h - 1)
    cols = np.minimum(np.rint(bilinear_coords(tw, w)).astype(np.intp), w - 1)
    return mask[rows][:, cols]
