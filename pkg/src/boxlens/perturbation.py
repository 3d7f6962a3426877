"""Blur perturbations: ablate one interpretable feature while leaving the rest intact."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FeatureMask:
    """Boolean pixel mask for one interpretable feature."""

    feature_id: int
    pixels: np.ndarray  # bool (H, W)

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=bool)
        object.__setattr__(self, "pixels", pixels)
        if pixels.ndim != 2:
            raise ValueError(f"mask must be a 2D grid, got shape {pixels.shape}")
        if self.feature_id < 0:
            raise ValueError(f"feature_id must be >= 0, got {self.feature_id}")

    @property
    def pixel_count(self) -> int:
        return int(self.pixels.sum())

    @property
    def empty(self) -> bool:
        return not self.pixels.any()


@dataclass(frozen=True)
class BlurConfig:
    """Gaussian blur parameters.

    kernel_radius defaults to ceil(3 * sigma). Edges are handled by reflect
    padding; the kernel is normalized to sum 1.
    """

    sigma: float = 10.0
    kernel_radius: int | None = None
    edge_policy: str = "reflect"

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.kernel_radius is not None and self.kernel_radius < 1:
            raise ValueError(f"kernel_radius must be >= 1, got {self.kernel_radius}")
        if self.edge_policy != "reflect":
            raise ValueError(f"unsupported edge_policy: {self.edge_policy!r}")

    @property
    def radius(self) -> int:
        if self.kernel_radius is not None:
            return self.kernel_radius
        return max(1, math.ceil(3.0 * self.sigma))


def gaussian_kernel_1d(sigma: float, radius: int) -> np.ndarray:
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def _convolve_axis(data: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kernel) // 2
    pad = [(0, 0)] * data.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(data, pad, mode="reflect")
    out = np.zeros_like(data, dtype=np.float64)
    for i, weight in enumerate(kernel):
        window = [slice(None)] * data.ndim
        window[axis] = slice(i, i + data.shape[axis])
        out += weight * padded[tuple(window)]
    return out


def gaussian_blur(image: np.ndarray, config: BlurConfig = BlurConfig()) -> np.ndarray:
    """Separable Gaussian blur of an (H, W) or (H, W, C) image, one pass per axis."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim not in (2, 3):
        raise ValueError(f"expected a 2D or 3D image, got shape {arr.shape}")
    kernel = gaussian_kernel_1d(config.sigma, config.radius)
    out = _convolve_axis(arr, kernel, axis=0)
    return _convolve_axis(out, kernel, axis=1)


def apply_masked_blur(
    image: np.ndarray, mask: FeatureMask, config: BlurConfig = BlurConfig()
) -> np.ndarray:
    """Blur the whole image once, then composite the blur in only where the mask is set.

    Pixels outside the mask are copied from the input untouched; an empty mask
    returns the input unchanged.
    """
    arr = np.asarray(image, dtype=np.float64)
    if arr.shape[:2] != mask.pixels.shape:
        raise ValueError(
            f"mask shape {mask.pixels.shape} does not match image spatial shape {arr.shape[:2]}"
        )
    if mask.empty:
        return arr.copy()
    blurred = gaussian_blur(arr, config)
    out = arr.copy()
    out[mask.pixels] = blurred[mask.pixels]
    return out
