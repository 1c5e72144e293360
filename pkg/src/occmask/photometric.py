"""Photometric error (SSIM + L1) and edge-aware disparity smoothness."""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .warp import as_image

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
DEFAULT_ALPHA = 0.85


def _box3(x: np.ndarray) -> np.ndarray:
    """3x3 mean filter over the first two axes with reflection padding."""
    h, w = x.shape[:2]
    p = np.pad(x, ((1, 1), (1, 1), (0, 0)), mode="reflect")
    acc = np.zeros_like(x)
    for dy in range(3):
        for dx in range(3):
            acc += p[dy : dy + h, dx : dx + w]
    return acc / 9.0


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = as_image(a, "first image")
    b = as_image(b, "second image")
    if a.shape != b.shape:
        raise InvalidInputError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def ssim_map(a, b) -> np.ndarray:
    """Per-pixel SSIM over 3x3 windows, averaged over channels. Shape (H, W)."""
    a, b = _pair(a, b)
    mu_a = _box3(a)
    mu_b = _box3(b)
    sigma_a = _box3(a * a) - mu_a**2
    sigma_b = _box3(b * b) - mu_b**2
    sigma_ab = _box3(a * b) - mu_a * mu_b

    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * sigma_ab + SSIM_C2)
    den = (mu_a**2 + mu_b**2 + SSIM_C1) * (sigma_a + sigma_b + SSIM_C2)
    return np.clip(num / den, -1.0, 1.0).mean(axis=2)


def photometric_error(a, b, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """``alpha * (1 - SSIM) / 2 + (1 - alpha) * |a - b|`` per pixel, shape (H, W)."""
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInputError(f"alpha must lie in [0, 1], got {alpha}")
    a, b = _pair(a, b)
    l1 = np.abs(a - b).mean(axis=2)
    if alpha == 0.0:
        return l1
    return alpha * (1.0 - ssim_map(a, b)) / 2.0 + (1.0 - alpha) * l1


def smoothness_loss(disparity, image) -> float:
    """Edge-aware smoothness of mean-normalized disparity.

    Forward differences are used; the x term averages over H x (W-1) pairs and
    the y term over (H-1) x W pairs. Image gradients are the channel mean of
    the absolute per-channel differences.
    """
    disp = np.asarray(disparity, dtype=np.float64)
    img = as_image(image)
    if disp.ndim != 2 or disp.shape != img.shape[:2]:
        raise InvalidInputError(f"disparity {disp.shape} does not match image {img.shape[:2]}")
    mean = disp.mean()
    if not np.isfinite(mean) or mean <= 0:
        raise InvalidInputError("disparity must have a positive finite mean")
    d = disp / mean

    loss = 0.0
    if d.shape[1] > 1:
        gdx = np.abs(d[:, :-1] - d[:, 1:])
        gix = np.abs(img[:, :-1] - img[:, 1:]).mean(axis=2)
        loss += float(np.mean(gdx * np.exp(-gix)))
    if d.shape[0] > 1:
        gdy = np.abs(d[:-1, :] - d[1:, :])
        giy = np.abs(img[:-1, :] - img[1:, :]).mean(axis=2)
        loss += float(np.mean(gdy * np.exp(-giy)))
    return loss
