"""Bilinear sampling and image reconstruction from an adjacent frame.

Images are float arrays of shape (H, W) or (H, W, C); depth maps are (H, W)
arrays of metric depth.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .geometry import Intrinsics, RigidTransform, SampleGrid, reproject


def as_image(values, name: str = "image") -> np.ndarray:
    """Return ``values`` as a float64 (H, W, C) array with 1 or 3 channels."""
    img = np.asarray(values, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise InvalidInputError(f"{name} must be (H, W), (H, W, 1) or (H, W, 3); got {img.shape}")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise InvalidInputError(f"{name} is empty")
    if not np.all(np.isfinite(img)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return img


def check_depth_map(depth, name: str = "depth") -> np.ndarray:
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2 or depth.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 2-D array, got shape {depth.shape}")
    if not np.all(np.isfinite(depth)) or np.any(depth <= 0):
        raise InvalidInputError(f"{name} must be finite and strictly positive")
    return depth


def depth_to_disparity(depth) -> np.ndarray:
    return 1.0 / check_depth_map(depth)


def bilinear_sample(source, grid: SampleGrid) -> np.ndarray:
    """Sample ``source`` at the grid coordinates with border clamping.

    Coordinates are clamped to ``[0, w-1] x [0, h-1]`` before the interpolation
    weights are computed, so out-of-image samples take the nearest border
    value. The output has the grid's spatial shape and the source's layout
    (2-D in, 2-D out).
    """
    src = np.asarray(source, dtype=np.float64)
    squeeze = src.ndim == 2
    if squeeze:
        src = src[..., None]
    if src.ndim != 3 or src.shape[0] == 0 or src.shape[1] == 0:
        raise InvalidInputError(f"cannot sample from array of shape {np.shape(source)}")
    h, w = src.shape[:2]

    u = np.clip(grid.u, 0.0, w - 1.0)
    v = np.clip(grid.v, 0.0, h - 1.0)
    x0 = np.floor(u).astype(np.intp)
    y0 = np.floor(v).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (u - x0)[..., None]
    fy = (v - y0)[..., None]

    top = (1.0 - fx) * src[y0, x0] + fx * src[y0, x1]
    bottom = (1.0 - fx) * src[y1, x0] + fx * src[y1, x1]
    out = (1.0 - fy) * top + fy * bottom
    return out[..., 0] if squeeze else out


def nearest_sample(source, grid: SampleGrid) -> np.ndarray:
    """Nearest-pixel lookup with the same border clamping as ``bilinear_sample``."""
    src = np.asarray(source, dtype=np.float64)
    h, w = src.shape[:2]
    # floor(x + 0.5) keeps ties deterministic (round-half-up)
    x = np.floor(np.clip(grid.u, 0.0, w - 1.0) + 0.5).astype(np.intp)
    y = np.floor(np.clip(grid.v, 0.0, h - 1.0) + 0.5).astype(np.intp)
    return src[np.minimum(y, h - 1), np.minimum(x, w - 1)]


def reconstruct(
    source_image, target_depth, k: Intrinsics, t: RigidTransform
) -> tuple[np.ndarray, SampleGrid]:
    """Synthesize the target view from ``source_image``.

    Args:
        source_image: Adjacent frame I_t'.
        target_depth: Depth of the target frame, same size as the source.
        k: Shared intrinsics.
        t: Transform from target camera coordinates to source camera coordinates.

    Returns:
        The reconstruction (same layout as ``source_image``) and the sample grid,
        whose ``z_proj`` feeds the occlusion test.
    """
    depth = check_depth_map(target_depth, "target depth")
    src = np.asarray(source_image, dtype=np.float64)
    if src.shape[:2] != depth.shape:
        raise InvalidInputError(f"source image {src.shape[:2]} and target depth {depth.shape} differ in size")
    grid = reproject(depth, k, t)
    return bilinear_sample(src, grid), grid


def in_bounds_mask(grid: SampleGrid, width: int, height: int) -> np.ndarray:
    """1 where the sample lies inside the image and in front of the camera."""
    inside = (
        (grid.u >= 0.0)
        & (grid.u <= width - 1.0)
        & (grid.v >= 0.0)
        & (grid.v <= height - 1.0)
        & (grid.z_proj > 0.0)
    )
    return inside.astype(np.uint8)


def resize_bilinear(values, height: int, width: int) -> np.ndarray:
    """Resize with half-pixel-center alignment (``align_corners=False`` style)."""
    src = np.asarray(values, dtype=np.float64)
    h, w = src.shape[:2]
    if (h, w) == (height, width):
        return src.copy()
    rows = (np.arange(height, dtype=np.float64) + 0.5) * (h / height) - 0.5
    cols = (np.arange(width, dtype=np.float64) + 0.5) * (w / width) - 0.5
    v, u = np.meshgrid(rows, cols, indexing="ij")
    return bilinear_sample(src, SampleGrid(u, v, np.ones_like(u)))


def downsample_area(values, factor: int) -> np.ndarray:
    """Block-mean downsampling; falls back to bilinear resizing for ragged sizes."""
    src = np.asarray(values, dtype=np.float64)
    if factor == 1:
        return src.copy()
    h, w = src.shape[:2]
    if h % factor or w % factor:
        return resize_bilinear(src, max(1, h // factor), max(1, w // factor))
    shape = (h // factor, factor, w // factor, factor) + src.shape[2:]
    return src.reshape(shape).mean(axis=(1, 3))
