"""Per-pixel hypercolumns: activation volumes upsampled and stacked across layers.

Each selected layer is resampled to the working resolution and concatenated
channel-wise, so every pixel gets one descriptor vector tracing it through the
network. Rows of the resulting matrix feed the clustering step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .backend import ActivationVolume
from .images import bilinear_resize

CONSTANT_CHANNEL_STD = 1e-12


@dataclass
class HypercolumnMatrix:
    """Rows are pixels, columns are stacked activation channels.

    pixel_index maps row r to its (row px, col px) grid position. A matrix
    fresh from build_hypercolumns covers the full grid (pixel_index is a
    bijection onto it); subsample_rows keeps the mapping injective but
    partial.
    """

    data: np.ndarray  # (n_rows, total_channels)
    pixel_index: np.ndarray  # (n_rows, 2) int
    layer_offsets: list[tuple[str, int, int]]  # (layer_name, start, count)
    grid_shape: tuple[int, int]

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError(f"data must be 2D, got shape {self.data.shape}")
        if self.pixel_index.shape != (self.data.shape[0], 2):
            raise ValueError("pixel_index must be (n_rows, 2) and match data")
        if sum(count for _, _, count in self.layer_offsets) != self.data.shape[1]:
            raise ValueError("layer_offsets channel counts must sum to total_channels")

    @property
    def n_rows(self) -> int:
        return int(self.data.shape[0])

    @property
    def total_channels(self) -> int:
        return int(self.data.shape[1])

    @property
    def covers_full_grid(self) -> bool:
        h, w = self.grid_shape
        if self.n_rows != h * w:
            return False
        flat = self.pixel_index[:, 0] * w + self.pixel_index[:, 1]
        return len(np.unique(flat)) == h * w

    def columns_for(self, layer_name: str) -> slice:
        for name, start, count in self.layer_offsets:
            if name == layer_name:
                return slice(start, start + count)
        raise KeyError(f"no layer {layer_name!r} in this matrix")


def upsample_volume(volume: ActivationVolume, target: tuple[int, int]) -> ActivationVolume:
    """Resample a volume to (height, width) with align-corners bilinear interpolation.

    Channel count is unchanged; a volume already at the target size is copied
    verbatim, and a 1x1 volume broadcasts its vector to every position.
    """
    th, tw = int(target[0]), int(target[1])
    if th < 1 or tw < 1:
        raise ValueError(f"target dimensions must be >= 1, got {(th, tw)}")
    return replace(volume, data=bilinear_resize(volume.data, (th, tw)))


def build_hypercolumns(
    volumes: list[ActivationVolume],
    working_resolution: tuple[int, int],
    normalize: bool = True,
) -> HypercolumnMatrix:
    """Upsample every volume to the working resolution and stack channels in input order.

    With normalize set (the default), each channel is standardized to zero
    mean and unit variance over pixels so high-magnitude layers do not
    dominate the clustering metric; constant channels become all-zero.
    """
    if not volumes:
        raise ValueError("need at least one activation volume")
    h, w = int(working_resolution[0]), int(working_resolution[1])

    blocks = []
    layer_offsets = []
    start = 0
    for volume in volumes:
        up = upsample_volume(volume, (h, w))
        c = up.channels
        blocks.append(up.data.reshape(h * w, c))
        layer_offsets.append((volume.layer_name, start, c))
        start += c
    data = np.concatenate(blocks, axis=1)

    if normalize:
        mean = data.mean(axis=0)
        std = data.std(axis=0)
        constant = std <= CONSTANT_CHANNEL_STD
        std = np.where(constant, 1.0, std)
        data = (data - mean) / std
        data[:, constant] = 0.0

    ys, xs = np.divmod(np.arange(h * w), w)
    pixel_index = np.stack([ys, xs], axis=1)
    return HypercolumnMatrix(
        data=data, pixel_index=pixel_index, layer_offsets=layer_offsets, grid_shape=(h, w)
    )


def subsample_rows(matrix: HypercolumnMatrix, max_rows: int, seed: int) -> HypercolumnMatrix:
    """Uniform row sample without replacement, deterministic for a fixed seed.

    Returns the input unchanged when it already fits within max_rows. Kept
    rows stay in grid order.
    """
    if max_rows < 1:
        raise ValueError(f"max_rows must be >= 1, got {max_rows}")
    if matrix.n_rows <= max_rows:
        return matrix
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(matrix.n_rows, size=max_rows, replace=False))
    return HypercolumnMatrix(
        data=matrix.data[keep],
        pixel_index=matrix.pixel_index[keep],
        layer_offsets=list(matrix.layer_offsets),
        grid_shape=matrix.grid_shape,
    )
