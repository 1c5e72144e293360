"""PFM/PNG readers and writers, JSON helpers and the frame-triplet manifest."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np
from PIL import Image

from .errors import FormatError, InvalidInputError
from .geometry import Intrinsics, RigidTransform
from .losses import FrameSet, SourceFrame

# ---------------------------------------------------------------------------
# PFM
# ---------------------------------------------------------------------------


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated tokens; return them and the data offset."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < n and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PFM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    if pos >= n or not data[pos : pos + 1].isspace():
        raise FormatError("PFM header is not terminated")
    return tokens, pos + 1


def read_pfm(path) -> np.ndarray:
    """Read a grayscale ("Pf") PFM into a top-down float32 array of shape (H, W)."""
    data = Path(path).read_bytes()
    tokens, offset = _header_tokens(data, 4)
    tag = tokens[0]
    if tag == b"PF":
        raise FormatError("3-channel PFM (PF) is not supported; expected a single-channel map")
    if tag != b"Pf":
        raise FormatError(f"not a PFM file (tag {tag[:8]!r})")
    try:
        width, height = int(tokens[1]), int(tokens[2])
        scale = float(tokens[3])
    except ValueError:
        raise FormatError("malformed PFM header") from None
    if width <= 0 or height <= 0:
        raise FormatError(f"invalid PFM size {width}x{height}")
    if scale == 0 or not np.isfinite(scale):
        raise FormatError("PFM scale must be a nonzero number")
    dtype = "<f4" if scale < 0 else ">f4"
    expected = width * height * 4
    raster = data[offset:]
    if len(raster) != expected:
        raise FormatError(f"PFM raster has {len(raster)} bytes, expected {expected}")
    values = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    if np.any(np.isnan(values)):
        raise FormatError("PFM contains NaN values")
    return np.flipud(values).astype(np.float32)


def write_pfm(path, values) -> None:
    """Write a 2-D map as little-endian grayscale PFM (rows stored bottom-up)."""
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise FormatError(f"PFM writer expects a 2-D map, got shape {arr.shape}")
    arr = arr.astype("<f4")
    if np.any(np.isnan(arr)):
        raise FormatError("refusing to write NaN values to PFM")
    h, w = arr.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(np.flipud(arr)).tobytes())


# ---------------------------------------------------------------------------
# PNG
# ---------------------------------------------------------------------------


def read_png(path) -> np.ndarray:
    """8-bit PNG as float64 (H, W, C) in [0, 1]; C is 1 (gray) or 3 (color)."""
    try:
        img = Image.open(path)
        img.load()
    except OSError as exc:
        raise FormatError(f"cannot read image {path}: {exc}") from None
    mode = img.mode
    if mode in ("1", "L", "LA"):
        img = img.convert("L")
    elif mode in ("RGB", "RGBA", "P", "PA"):
        img = img.convert("RGB")
    else:
        raise FormatError(f"unsupported image mode {mode!r} (only 8-bit gray/RGB)")
    arr = np.asarray(img, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[..., None]
    return arr


def to_uint8(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise InvalidInputError("image values must lie in [0, 1]")
    return np.round(arr * 255.0).astype(np.uint8)


def write_png(path, image) -> None:
    arr = to_uint8(image)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    if not (arr.ndim == 2 or (arr.ndim == 3 and arr.shape[2] == 3)):
        raise FormatError(f"cannot write image of shape {arr.shape} as PNG")
    Image.fromarray(arr).save(path, format="PNG")


def write_mask_png(path, mask) -> None:
    """Binary mask as black (0) / white (1) grayscale PNG."""
    m = np.asarray(mask)
    if not np.all((m == 0) | (m == 1)):
        raise InvalidInputError("mask must be binary")
    Image.fromarray((m.astype(np.uint8) * 255)).save(path, format="PNG")


@lru_cache(maxsize=1)
def colormap_table() -> np.ndarray:
    """The shipped 256 x 3 uint8 viridis lookup table."""
    text = resources.files("occmask").joinpath("data/viridis256.txt").read_text()
    rows = [line.split() for line in text.splitlines() if line and not line.startswith("#")]
    table = np.array(rows, dtype=np.uint8)
    if table.shape != (256, 3):
        raise FormatError(f"colormap table has shape {table.shape}")
    return table


def colorize(values, vmin: float = 0.0, vmax: float = 1.0) -> np.ndarray:
    """Map values through the colormap; out-of-range values saturate."""
    if not vmax > vmin:
        raise InvalidInputError("colorize needs vmax > vmin")
    v = np.asarray(values, dtype=np.float64)
    idx = np.round(np.clip((v - vmin) / (vmax - vmin), 0.0, 1.0) * 255.0).astype(np.intp)
    return colormap_table()[idx]


def write_colormap_png(path, values, vmin: float = 0.0, vmax: float = 1.0) -> None:
    Image.fromarray(colorize(values, vmin, vmax)).save(path, format="PNG")


# ---------------------------------------------------------------------------
# JSON documents
# ---------------------------------------------------------------------------


def load_json(path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None


def save_json(path, data: Any) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def load_intrinsics(path) -> Intrinsics:
    return Intrinsics.from_dict(load_json(path))


def load_transform(path) -> RigidTransform:
    return RigidTransform.from_dict(load_json(path))


# ---------------------------------------------------------------------------
# Triplet manifest
# ---------------------------------------------------------------------------

MANIFEST_KEYS = (
    "target_image",
    "previous_image",
    "next_image",
    "target_depth",
    "previous_depth",
    "next_depth",
    "intrinsics",
    "transform_to_previous",
    "transform_to_next",
)


@dataclass(frozen=True)
class TripletManifest:
    """Paths of a target frame and its previous/next neighbours.

    Relative paths in the JSON file are resolved against the manifest's
    directory. Depths are PFM, images PNG, intrinsics and transforms JSON.
    """

    target_image: Path
    previous_image: Path
    next_image: Path
    target_depth: Path
    previous_depth: Path
    next_depth: Path
    intrinsics: Path
    transform_to_previous: Path
    transform_to_next: Path

    @classmethod
    def load(cls, path) -> "TripletManifest":
        path = Path(path)
        data = load_json(path)
        if not isinstance(data, dict):
            raise FormatError(f"{path}: manifest must be a JSON object")
        missing = [k for k in MANIFEST_KEYS if k not in data]
        if missing:
            raise InvalidInputError(f"{path}: manifest missing {', '.join(missing)}")
        base = path.parent
        resolved = {k: (base / str(data[k])) for k in MANIFEST_KEYS}
        for key, p in resolved.items():
            if not p.is_file():
                raise InvalidInputError(f"{path}: {key} file not found: {p}")
        return cls(**resolved)

    def to_dict(self, relative_to: Optional[Path] = None) -> dict[str, str]:
        out = {}
        for key in MANIFEST_KEYS:
            p = getattr(self, key)
            out[key] = str(p.relative_to(relative_to)) if relative_to else str(p)
        return out

    def load_frames(self) -> tuple[FrameSet, np.ndarray]:
        """Frame set (previous first, then next) and the target depth map."""
        target = read_png(self.target_image)
        k = load_intrinsics(self.intrinsics)
        target_depth = read_pfm(self.target_depth).astype(np.float64)
        sources = (
            SourceFrame(
                read_png(self.previous_image),
                read_pfm(self.previous_depth).astype(np.float64),
                load_transform(self.transform_to_previous),
            ),
            SourceFrame(
                read_png(self.next_image),
                read_pfm(self.next_depth).astype(np.float64),
                load_transform(self.transform_to_next),
            ),
        )
        frames = FrameSet(target, sources, k)
        if target_depth.shape != frames.shape:
            raise InvalidInputError(f"target depth {target_depth.shape} does not match images {frames.shape}")
        return frames, target_depth


def write_triplet(
    out_dir,
    target_image,
    previous_image,
    next_image,
    target_depth,
    previous_depth,
    next_depth,
    k: Intrinsics,
    to_previous: RigidTransform,
    to_next: RigidTransform,
) -> Path:
    """Write a complete triplet with a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = {
        "target_image": "target.png",
        "previous_image": "previous.png",
        "next_image": "next.png",
        "target_depth": "target_depth.pfm",
        "previous_depth": "previous_depth.pfm",
        "next_depth": "next_depth.pfm",
        "intrinsics": "intrinsics.json",
        "transform_to_previous": "transform_to_previous.json",
        "transform_to_next": "transform_to_next.json",
    }
    write_png(out / names["target_image"], target_image)
    write_png(out / names["previous_image"], previous_image)
    write_png(out / names["next_image"], next_image)
    write_pfm(out / names["target_depth"], target_depth)
    write_pfm(out / names["previous_depth"], previous_depth)
    write_pfm(out / names["next_depth"], next_depth)
    save_json(out / names["intrinsics"], k.to_dict())
    save_json(out / names["transform_to_previous"], to_previous.to_dict())
    save_json(out / names["transform_to_next"], to_next.to_dict())
    manifest = out / "manifest.json"
    save_json(manifest, names)
    return manifest
