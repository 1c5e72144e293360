"""Occlusion mask, automask and the photometric loss compositions.

Loss kinds:

* ``average`` - mean of the reprojection errors over adjacent frames.
* ``min_reprojection`` - per-pixel minimum over adjacent frames.
* ``nonoccluded_average`` - mean over the frames where the pixel is visible;
  pixels hidden in every frame contribute 0.
* ``nonoccluded_min`` - per-pixel minimum of ``pe + (1 - omega)``; the
  automask for this kind gets the same penalty on its reconstruction side.

The occlusion test marks a pixel as occluded when the depth observed in the
source frame at the sample location is *closer* than the projected depth by
more than the tolerance: ``z_sampled < z_proj * (1 - tolerance)``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ContractViolationError, InvalidInputError
from .geometry import Intrinsics, RigidTransform, SampleGrid
from .photometric import DEFAULT_ALPHA, photometric_error, smoothness_loss
from .warp import (
    as_image,
    bilinear_sample,
    check_depth_map,
    downsample_area,
    in_bounds_mask,
    nearest_sample,
    reconstruct,
    resize_bilinear,
)

LOSS_KINDS = ("average", "min_reprojection", "nonoccluded_average", "nonoccluded_min")
DEPTH_SAMPLING = ("bilinear", "nearest")


@dataclass(frozen=True)
class LossConfig:
    lambda_smoothness: float = 0.001
    alpha: float = DEFAULT_ALPHA
    tolerance: float = 0.3
    scales: int = 4
    loss_kind: str = "nonoccluded_min"

    def __post_init__(self) -> None:
        if not (np.isfinite(self.lambda_smoothness) and self.lambda_smoothness >= 0):
            raise InvalidInputError(f"lambda_smoothness must be >= 0, got {self.lambda_smoothness}")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidInputError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.tolerance < 1.0:
            raise InvalidInputError(f"tolerance must lie in [0, 1), got {self.tolerance}")
        if isinstance(self.scales, bool) or int(self.scales) != self.scales or self.scales < 1:
            raise InvalidInputError(f"scales must be an integer >= 1, got {self.scales}")
        if self.loss_kind not in LOSS_KINDS:
            raise InvalidInputError(f"loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "LossConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidInputError(f"unknown loss config fields: {sorted(unknown)}")
        try:
            kwargs = {
                name: (str(v) if name == "loss_kind" else int(v) if name == "scales" else float(v))
                for name, v in data.items()
            }
        except (TypeError, ValueError) as exc:
            raise InvalidInputError(f"bad loss config value: {exc}") from None
        if "scales" in data and data["scales"] != kwargs["scales"]:
            raise InvalidInputError(f"scales must be an integer, got {data['scales']!r}")
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "LossConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"loss config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise InvalidInputError("loss config must be a JSON object")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "LossConfig":
        return cls.from_json(Path(path).read_text())


def _stack(maps: Sequence, name: str) -> np.ndarray:
    if len(maps) == 0:
        raise InvalidInputError(f"{name}: at least one map is required")
    arrs = [np.asarray(m, dtype=np.float64) for m in maps]
    if any(a.shape != arrs[0].shape for a in arrs):
        raise InvalidInputError(f"{name}: maps differ in shape")
    return np.stack(arrs)


def occlusion_mask(
    grid: SampleGrid, source_depth, tolerance: float = 0.3, sampling: str = "bilinear"
) -> np.ndarray:
    """Visibility of each target pixel in the source frame (1 = usable).

    Args:
        grid: Sample locations and projected depths from ``reproject``.
        source_depth: Predicted depth map of the source frame.
        tolerance: Relative slack; only depth ratios below ``1 - tolerance``
            count as occlusion.
        sampling: ``"bilinear"`` (default, same sampler as the images) or
            ``"nearest"`` to avoid blending foreground and background depths.
    """
    if not 0.0 <= tolerance < 1.0:
        raise InvalidInputError(f"tolerance must lie in [0, 1), got {tolerance}")
    depth = check_depth_map(source_depth, "source depth")
    if sampling == "bilinear":
        observed = bilinear_sample(depth, grid)
    elif sampling == "nearest":
        observed = nearest_sample(depth, grid)
    else:
        raise InvalidInputError(f"sampling must be one of {DEPTH_SAMPLING}, got {sampling!r}")
    h, w = depth.shape
    visible = in_bounds_mask(grid, w, h).astype(bool)
    occluded = observed < grid.z_proj * (1.0 - tolerance)
    return (visible & ~occluded).astype(np.uint8)


def automask_from_errors(identity_errors, reprojection_errors, occlusion_masks=None) -> np.ndarray:
    """1 where the best reconstruction beats the best unwarped frame (strictly)."""
    identity = _stack(identity_errors, "identity errors")
    reproj = _stack(reprojection_errors, "reprojection errors")
    if identity.shape[1:] != reproj.shape[1:]:
        raise InvalidInputError("identity and reprojection errors differ in shape")
    if occlusion_masks is not None:
        masks = _stack(occlusion_masks, "occlusion masks")
        if masks.shape != reproj.shape:
            raise InvalidInputError("occlusion masks do not match reprojection errors")
        reproj = reproj + (1.0 - masks)
    return (identity.min(axis=0) > reproj.min(axis=0)).astype(np.uint8)


def automask(target, sources, reconstructions, alpha: float = DEFAULT_ALPHA, occlusion_penalties=None) -> np.ndarray:
    identity = [photometric_error(target, s, alpha) for s in sources]
    reproj = [photometric_error(target, r, alpha) for r in reconstructions]
    return automask_from_errors(identity, reproj, occlusion_penalties)


def average_reprojection(pe_maps) -> np.ndarray:
    return _stack(pe_maps, "average_reprojection").mean(axis=0)


def min_reprojection(pe_maps) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel minimum and the index of the chosen frame (first wins ties)."""
    pe = _stack(pe_maps, "min_reprojection")
    selection = np.argmin(pe, axis=0)
    loss = np.take_along_axis(pe, selection[None], axis=0)[0]
    return loss, selection.astype(np.uint8)


def _masks_for(pe: np.ndarray, masks, name: str) -> np.ndarray:
    omega = _stack(masks, name)
    if omega.shape != pe.shape:
        raise InvalidInputError(f"{name}: {len(masks)} masks do not match {pe.shape[0]} error maps")
    if not np.all((omega == 0) | (omega == 1)):
        raise InvalidInputError(f"{name}: masks must be binary")
    return omega


def nonoccluded_average(pe_maps, masks) -> np.ndarray:
    pe = _stack(pe_maps, "nonoccluded_average")
    omega = _masks_for(pe, masks, "nonoccluded_average")
    return (omega * pe).sum(axis=0) / np.maximum(omega.sum(axis=0), 1.0)


def nonoccluded_min(pe_maps, masks) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel minimum of ``pe + (1 - omega)``.

    Requires every error in [0, 1]; otherwise the occlusion penalty of 1 would
    no longer dominate and an occluded frame could still be selected.
    """
    pe = _stack(pe_maps, "nonoccluded_min")
    omega = _masks_for(pe, masks, "nonoccluded_min")
    if np.any(pe > 1.0) or np.any(pe < 0.0):
        raise ContractViolationError("nonoccluded_min needs photometric errors in [0, 1]")
    return min_reprojection(pe + (1.0 - omega))


def scale_loss(photometric_loss, mask, smoothness: float, lambda_smoothness: float) -> float:
    """Pixel mean of ``lambda * Ls + mu * Lp`` for one scale."""
    lp = np.asarray(photometric_loss, dtype=np.float64)
    mu = np.asarray(mask, dtype=np.float64)
    return float(lambda_smoothness * smoothness + np.mean(mu * lp))


def disparity_to_depth(disp, min_depth: float = 0.1, max_depth: float = 100.0) -> np.ndarray:
    """Map sigmoid-style disparity in [0, 1] to depth in [min_depth, max_depth]."""
    if not (0 < min_depth < max_depth):
        raise InvalidInputError(f"need 0 < min_depth < max_depth, got {min_depth}, {max_depth}")
    d = np.asarray(disp, dtype=np.float64)
    if np.any(~np.isfinite(d)) or np.any(d < 0) or np.any(d > 1):
        raise InvalidInputError("disparity must lie in [0, 1]")
    min_disp = 1.0 / max_depth
    max_disp = 1.0 / min_depth
    return 1.0 / (min_disp + (max_disp - min_disp) * d)


@dataclass(frozen=True, eq=False)
class SourceFrame:
    """An adjacent frame: its image, its predicted depth and ``T_{t->t'}``."""

    image: np.ndarray
    depth: np.ndarray
    transform: RigidTransform


@dataclass(frozen=True, eq=False)
class FrameSet:
    target: np.ndarray
    sources: tuple[SourceFrame, ...]
    intrinsics: Intrinsics

    def __post_init__(self) -> None:
        target = as_image(self.target, "target image")
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "sources", tuple(self.sources))
        if not self.sources:
            raise InvalidInputError("a frame set needs at least one source frame")
        shape = target.shape
        for i, src in enumerate(self.sources):
            img = as_image(src.image, f"source image {i}")
            if img.shape != shape:
                raise InvalidInputError(f"source image {i} has shape {img.shape}, target {shape}")
            depth = check_depth_map(src.depth, f"source depth {i}")
            if depth.shape != shape[:2]:
                raise InvalidInputError(f"source depth {i} has shape {depth.shape}, target {shape[:2]}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.target.shape[:2]


@dataclass(frozen=True, eq=False)
class ViewTerms:
    """Per-frame quantities for one target depth map at full resolution."""

    depth: np.ndarray
    reconstructions: tuple[np.ndarray, ...]
    grids: tuple[SampleGrid, ...]
    reprojection_errors: tuple[np.ndarray, ...]
    identity_errors: tuple[np.ndarray, ...]
    occlusion_masks: tuple[np.ndarray, ...]


def compute_view_terms(
    frames: FrameSet,
    target_depth,
    alpha: float = DEFAULT_ALPHA,
    tolerance: float = 0.3,
    sampling: str = "bilinear",
    identity_errors: Optional[Sequence[np.ndarray]] = None,
) -> ViewTerms:
    depth = check_depth_map(target_depth, "target depth")
    if depth.shape != frames.shape:
        raise InvalidInputError(f"target depth {depth.shape} does not match images {frames.shape}")
    recs, grids, pes, masks = [], [], [], []
    for src in frames.sources:
        rec, grid = reconstruct(src.image, depth, frames.intrinsics, src.transform)
        recs.append(rec)
        grids.append(grid)
        pes.append(photometric_error(frames.target, rec, alpha))
        masks.append(occlusion_mask(grid, src.depth, tolerance, sampling))
    if identity_errors is None:
        identity_errors = [photometric_error(frames.target, s.image, alpha) for s in frames.sources]
    return ViewTerms(depth, tuple(recs), tuple(grids), tuple(pes), tuple(identity_errors), tuple(masks))


def photometric_loss(kind: str, terms: ViewTerms) -> tuple[np.ndarray, Optional[np.ndarray], np.ndarray]:
    """Loss map, selection map (None for averaging kinds) and automask for ``kind``."""
    pe = terms.reprojection_errors
    omega = terms.occlusion_masks
    penalties = None
    selection = None
    if kind == "average":
        lp = average_reprojection(pe)
    elif kind == "min_reprojection":
        lp, selection = min_reprojection(pe)
    elif kind == "nonoccluded_average":
        lp = nonoccluded_average(pe, omega)
    elif kind == "nonoccluded_min":
        lp, selection = nonoccluded_min(pe, omega)
        penalties = omega
    else:
        raise InvalidInputError(f"unknown loss kind {kind!r}")
    mu = automask_from_errors(terms.identity_errors, pe, penalties)
    return lp, selection, mu


@dataclass(frozen=True, eq=False)
class ScaleDiagnostics:
    scale: int
    terms: ViewTerms
    photometric_loss: np.ndarray
    selection: Optional[np.ndarray]
    automask: np.ndarray
    smoothness: float
    loss: float


def depth_pyramid(depth, scales: int) -> list[np.ndarray]:
    """Depth maps at full, 1/2, 1/4, ... resolution (block means of depth)."""
    d = check_depth_map(depth)
    return [downsample_area(d, 2**s) for s in range(scales)]


def total_loss(
    frames: FrameSet,
    depths: Sequence,
    config: LossConfig = LossConfig(),
    sampling: str = "bilinear",
) -> tuple[float, list[ScaleDiagnostics]]:
    """Multi-scale training loss for one target frame.

    Each entry of ``depths`` is the target depth prediction at one scale. It is
    upsampled to the image resolution before reprojection, so all photometric
    terms are evaluated at full resolution. The smoothness term uses the
    disparity at its native resolution against the target image resized to
    match. Returns the mean over scales and the per-scale diagnostics.
    """
    if len(depths) != config.scales:
        raise InvalidInputError(f"expected {config.scales} depth maps, got {len(depths)}")
    h, w = frames.shape
    identity = [photometric_error(frames.target, s.image, config.alpha) for s in frames.sources]
    diagnostics = []
    for scale, depth in enumerate(depths):
        depth = check_depth_map(depth, f"depth at scale {scale}")
        full = resize_bilinear(depth, h, w)
        terms = compute_view_terms(frames, full, config.alpha, config.tolerance, sampling, identity)
        lp, selection, mu = photometric_loss(config.loss_kind, terms)

        dh, dw = depth.shape
        if (dh, dw) == (h, w):
            image = frames.target
        elif h % dh == 0 and w % dw == 0 and h // dh == w // dw:
            image = downsample_area(frames.target, h // dh)
        else:
            image = resize_bilinear(frames.target, dh, dw)
        ls = smoothness_loss(1.0 / depth, image)
        loss = scale_loss(lp, mu, ls, config.lambda_smoothness)
        diagnostics.append(ScaleDiagnostics(scale, terms, lp, selection, mu, ls, loss))
    return float(np.mean([d.loss for d in diagnostics])), diagnostics
