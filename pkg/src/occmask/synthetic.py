"""Ray-cast synthetic scenes with exact depth, and a z-buffer visibility oracle.

Scenes are static collections of textured rectangles and spheres in front of
an optional infinite background plane ``z = depth`` (world frame). Camera
poses are camera-to-world transforms; the target camera of generated
triplets sits at the world origin looking along +z.

Textures are solid (evaluated on primitive-local 3-D coordinates) and view
independent, so two renders of the same surface point always agree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError, SceneConfigError
from .geometry import (
    Intrinsics,
    RigidTransform,
    axis_angle_rotation,
    pixel_grid,
    project,
    transform_points,
)
from .warp import in_bounds_mask

TEXTURE_KINDS = ("noise", "checker")
PRIMITIVE_KINDS = ("plane", "sphere")
MIN_PRIMITIVE_DEPTH = 2.0
MAX_PRIMITIVE_DEPTH = 50.0
BACKGROUND_DEPTH = 60.0
ORACLE_EPS = 1e-6

_T_MIN = 1e-9


# --------------------------------------------------------------------------
# Textures
# --------------------------------------------------------------------------

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_PRIMES = (np.uint64(0x9E3779B97F4A7C15), np.uint64(0xC2B2AE3D27D4EB4F), np.uint64(0x165667B19E3779F9))


def _hash01(ix: np.ndarray, iy: np.ndarray, iz: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic lattice values in [0, 1) (splitmix64 finalizer)."""
    x = np.full(ix.shape, (seed * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF, dtype=np.uint64)
    for coord, prime in zip((ix, iy, iz), _PRIMES):
        x = x ^ (coord.astype(np.int64).view(np.uint64) * prime)
        x = x ^ (x >> np.uint64(30))
        x = x * _M1
        x = x ^ (x >> np.uint64(27))
        x = x * _M2
        x = x ^ (x >> np.uint64(31))
    return (x >> np.uint64(11)).astype(np.float64) / float(2**53)


def value_noise(points: np.ndarray, seed: int) -> np.ndarray:
    """Smooth 3-D value noise in [0, 1] with unit lattice spacing."""
    cell = np.floor(points)
    f = points - cell
    s = f * f * (3.0 - 2.0 * f)
    i = cell.astype(np.int64)
    out = np.zeros(points.shape[:-1])
    for dx in (0, 1):
        wx = s[..., 0] if dx else 1.0 - s[..., 0]
        for dy in (0, 1):
            wy = s[..., 1] if dy else 1.0 - s[..., 1]
            for dz in (0, 1):
                wz = s[..., 2] if dz else 1.0 - s[..., 2]
                out += wx * wy * wz * _hash01(i[..., 0] + dx, i[..., 1] + dy, i[..., 2] + dz, seed)
    return out


@dataclass(frozen=True)
class Texture:
    """Procedural texture.

    ``noise`` params: ``scale`` (lattice spacing in meters), ``base``,
    ``amplitude``, ``octaves``, ``tint`` (RGB in [0, 1]).
    ``checker`` params: ``size`` (meters), ``low``, ``high``, ``tint``.
    """

    kind: str = "noise"
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in TEXTURE_KINDS:
            raise InvalidInputError(f"texture kind must be one of {TEXTURE_KINDS}, got {self.kind!r}")

    def _tint(self) -> np.ndarray:
        tint = np.asarray(self.params.get("tint", (1.0, 1.0, 1.0)), dtype=np.float64)
        if tint.shape != (3,) or np.any(tint < 0) or np.any(tint > 1):
            raise InvalidInputError("texture tint must be three values in [0, 1]")
        return tint

    def intensity(self, local_points: np.ndarray) -> np.ndarray:
        p = np.asarray(local_points, dtype=np.float64)
        if self.kind == "noise":
            scale = float(self.params.get("scale", 0.5))
            octaves = int(self.params.get("octaves", 2))
            base = float(self.params.get("base", 0.5))
            amplitude = float(self.params.get("amplitude", 0.8))
            total = np.zeros(p.shape[:-1])
            norm = 0.0
            for o in range(octaves):
                weight = 0.5**o
                total += weight * value_noise(p * (2.0**o / scale), self.seed + o)
                norm += weight
            value = base + amplitude * (total / norm - 0.5)
        else:
            size = float(self.params.get("size", 1.0))
            low = float(self.params.get("low", 0.2))
            high = float(self.params.get("high", 0.8))
            parity = np.floor(p / size).astype(np.int64).sum(axis=-1) % 2
            value = np.where(parity == 0, low, high)
        return np.clip(value, 0.0, 1.0)

    def evaluate(self, local_points: np.ndarray) -> np.ndarray:
        """RGB values in [0, 1], shape (..., 3)."""
        return self.intensity(local_points)[..., None] * self._tint()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": _jsonable(self.params), "seed": int(self.seed)}

    @classmethod
    def from_dict(cls, data: dict) -> "Texture":
        return cls(str(data.get("kind", "noise")), dict(data.get("params", {})), int(data.get("seed", 0)))


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


# --------------------------------------------------------------------------
# Primitives and scenes
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Primitive:
    """A textured rectangle or sphere.

    ``pose`` maps primitive-local coordinates to world coordinates. A plane
    spans the local x/y axes with half-extents ``extent = (hx, hy)``; a sphere
    is centered at the local origin with ``extent = (radius,)``.
    """

    kind: str
    pose: RigidTransform
    extent: tuple[float, ...]
    texture: Texture = field(default_factory=Texture)

    def __post_init__(self) -> None:
        if self.kind not in PRIMITIVE_KINDS:
            raise InvalidInputError(f"primitive kind must be one of {PRIMITIVE_KINDS}, got {self.kind!r}")
        extent = tuple(float(e) for e in np.atleast_1d(self.extent))
        expected = 2 if self.kind == "plane" else 1
        if len(extent) != expected or any(not (e > 0 and np.isfinite(e)) for e in extent):
            raise InvalidInputError(f"{self.kind} needs {expected} positive extent value(s), got {extent}")
        object.__setattr__(self, "extent", extent)

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """Smallest ray parameter ``t > 0`` of a hit, ``inf`` on a miss."""
        center = self.pose.translation
        rot = self.pose.rotation
        if self.kind == "plane":
            normal = rot[:, 2]
            denom = dirs @ normal
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.dot(center - origin, normal) / denom
            hit = np.isfinite(t) & (t > _T_MIN)
            t = np.where(hit, t, 0.0)
            local = (origin + t[..., None] * dirs - center) @ rot
            inside = (np.abs(local[..., 0]) <= self.extent[0]) & (np.abs(local[..., 1]) <= self.extent[1])
            return np.where(hit & inside, t, np.inf)

        radius = self.extent[0]
        oc = origin - center
        a = np.einsum("...i,...i->...", dirs, dirs)
        b = dirs @ oc
        c = float(oc @ oc) - radius * radius
        disc = b * b - a * c
        ok = disc >= 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        # numerically stable root pair
        q = -(b + np.copysign(sq, b))
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = q / a
            r2 = c / q
        near = np.minimum(r1, r2)
        far = np.maximum(r1, r2)
        t = np.where(near > _T_MIN, near, np.where(far > _T_MIN, far, np.inf))
        return np.where(ok & np.isfinite(t), t, np.inf)

    def surface_points(self) -> np.ndarray:
        """World points bounding the primitive (corners, or sphere extremes)."""
        if self.kind == "plane":
            hx, hy = self.extent
            local = np.array([[sx * hx, sy * hy, 0.0] for sx in (-1, 1) for sy in (-1, 1)])
        else:
            r = self.extent[0]
            local = np.vstack([np.eye(3) * r, -np.eye(3) * r])
        return transform_points(local, self.pose)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "pose": self.pose.to_dict(),
            "extent": list(self.extent),
            "texture": self.texture.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Primitive":
        try:
            return cls(
                str(data["kind"]),
                RigidTransform.from_dict(data["pose"]),
                tuple(data["extent"]),
                Texture.from_dict(data.get("texture", {})),
            )
        except KeyError as exc:
            raise InvalidInputError(f"primitive missing field {exc.args[0]!r}") from None


@dataclass(frozen=True)
class Background:
    """Infinite textured plane ``z = depth`` in world coordinates."""

    depth: float = BACKGROUND_DEPTH
    texture: Texture = field(default_factory=lambda: Texture("noise", {"scale": 1.2}, 0))

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.depth - origin[2]) / dirs[..., 2]
        return np.where(np.isfinite(t) & (t > _T_MIN), t, np.inf)

    def to_dict(self) -> dict:
        return {"depth": float(self.depth), "texture": self.texture.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "Background":
        return cls(float(data.get("depth", BACKGROUND_DEPTH)), Texture.from_dict(data.get("texture", {})))


@dataclass(frozen=True, eq=False)
class Scene:
    primitives: tuple[Primitive, ...] = ()
    background: Optional[Background] = field(default_factory=Background)

    def __post_init__(self) -> None:
        object.__setattr__(self, "primitives", tuple(self.primitives))

    def to_dict(self) -> dict:
        return {
            "primitives": [p.to_dict() for p in self.primitives],
            "background": None if self.background is None else self.background.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scene":
        if not isinstance(data, dict):
            raise InvalidInputError("scene must be a JSON object")
        bg = data.get("background", {})
        return cls(
            tuple(Primitive.from_dict(p) for p in data.get("primitives", [])),
            None if bg is None else Background.from_dict(bg),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Scene":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"scene is not valid JSON: {exc}") from None

    @classmethod
    def load(cls, path) -> "Scene":
        return cls.from_json(Path(path).read_text())


def check_scene(scene: Scene, camera_poses: Sequence[RigidTransform] = (RigidTransform(),)) -> None:
    """Raise if any primitive reaches zero or negative depth in any camera."""
    for pose in camera_poses:
        world_to_cam = pose.inverse()
        for i, prim in enumerate(scene.primitives):
            z = transform_points(prim.surface_points(), world_to_cam)[:, 2]
            if np.min(z) <= 0:
                raise SceneConfigError(f"primitive {i} is not in front of every camera")
        if scene.background is not None and scene.background.depth - pose.translation[2] <= 0:
            raise SceneConfigError("background plane is behind a camera")


def displace_primitive(scene: Scene, index: int, offset) -> Scene:
    """Copy of ``scene`` with one primitive translated by ``offset`` (world frame)."""
    prims = list(scene.primitives)
    p = prims[index]
    moved = RigidTransform(p.pose.rotation, p.pose.translation + np.asarray(offset, dtype=np.float64))
    prims[index] = replace(p, pose=moved)
    return replace(scene, primitives=tuple(prims))


# --------------------------------------------------------------------------
# Ray casting
# --------------------------------------------------------------------------


def cast_rays(scene: Scene, origin, dirs) -> tuple[np.ndarray, np.ndarray]:
    """Nearest hit along rays ``origin + t * dirs``.

    Returns ``(t, index)`` where ``index`` is the primitive index, -1 for the
    background and -2 for a miss (``t = inf``).
    """
    origin = np.asarray(origin, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    best = np.full(dirs.shape[:-1], np.inf)
    index = np.full(dirs.shape[:-1], -2, dtype=np.int64)
    if scene.background is not None:
        t = scene.background.intersect(origin, dirs)
        index[np.isfinite(t)] = -1
        best = t
    for i, prim in enumerate(scene.primitives):
        t = prim.intersect(origin, dirs)
        closer = t < best
        best = np.where(closer, t, best)
        index[closer] = i
    return best, index


def _camera_rays(k: Intrinsics, pose: RigidTransform, width: int, height: int) -> np.ndarray:
    u, v = pixel_grid(height, width)
    rays = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], axis=-1)
    # unit camera-z component: the ray parameter equals camera depth
    return rays @ pose.rotation.T


@dataclass(frozen=True, eq=False)
class RenderOutput:
    image: np.ndarray
    depth: np.ndarray
    pose: RigidTransform


def render(scene: Scene, k: Intrinsics, pose: RigidTransform, width: int, height: int) -> RenderOutput:
    """Ray-cast ``scene`` from a camera with camera-to-world ``pose``."""
    if width <= 0 or height <= 0:
        raise InvalidInputError(f"resolution must be positive, got {width}x{height}")
    origin = pose.translation
    dirs = _camera_rays(k, pose, width, height)
    depth, index = cast_rays(scene, origin, dirs)
    if np.any(index == -2):
        raise SceneConfigError(f"{int(np.sum(index == -2))} rays miss the scene and there is no background")

    points = origin + depth[..., None] * dirs
    image = np.zeros((height, width, 3))
    if scene.background is not None:
        sel = index == -1
        bg_local = points[sel].copy()
        bg_local[:, 2] = 0.0
        image[sel] = scene.background.texture.evaluate(bg_local)
    for i, prim in enumerate(scene.primitives):
        sel = index == i
        if np.any(sel):
            local = (points[sel] - prim.pose.translation) @ prim.pose.rotation
            image[sel] = prim.texture.evaluate(local)
    return RenderOutput(image, depth, pose)


def relative_transform(pose_target: RigidTransform, pose_source: RigidTransform) -> RigidTransform:
    """``T_{t->t'}``: target camera coordinates to source camera coordinates."""
    if np.array_equal(pose_target.rotation, pose_source.rotation) and np.array_equal(
        pose_target.translation, pose_source.translation
    ):
        return RigidTransform.identity()
    return pose_source.inverse() @ pose_target


def zbuffer_occlusion_oracle(
    scene: Scene,
    k: Intrinsics,
    pose_target: RigidTransform,
    pose_source: RigidTransform,
    width: int,
    height: int,
    target_depth: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Exact visibility of every target pixel's surface point from the source camera.

    A pixel is 0 when the segment from the source camera to its point is hit
    by geometry more than ``ORACLE_EPS`` meters before the point, or when the
    point projects outside the source image; 1 otherwise. ``target_depth`` may
    pass a precomputed render of the target to skip re-rendering.
    """
    if target_depth is None:
        target_depth = render(scene, k, pose_target, width, height).depth
    dirs = _camera_rays(k, pose_target, width, height)
    points = pose_target.translation + target_depth[..., None] * dirs

    rel = relative_transform(pose_target, pose_source)
    u, v = pixel_grid(height, width)
    cam_points = np.stack([(u - k.cx) / k.fx * target_depth, (v - k.cy) / k.fy * target_depth, target_depth], -1)
    grid = project(transform_points(cam_points, rel), k)
    if rel.is_identity():
        inside = np.ones((height, width), dtype=bool)
    else:
        inside = in_bounds_mask(grid, width, height).astype(bool)

    origin = pose_source.translation
    seg = points - origin
    t_hit, _ = cast_rays(scene, origin, seg)
    length = np.linalg.norm(seg, axis=-1)
    blocked = t_hit < 1.0 - ORACLE_EPS / length
    return (inside & ~blocked).astype(np.uint8)


# --------------------------------------------------------------------------
# Random scenes
# --------------------------------------------------------------------------


def _noise_texture(rng: np.random.Generator, depth: float) -> Texture:
    params = {
        "scale": float(depth * rng.uniform(0.018, 0.03)),
        "octaves": 2,
        "base": float(rng.uniform(0.4, 0.6)),
        "amplitude": float(rng.uniform(0.7, 1.0)),
        "tint": [float(x) for x in rng.uniform(0.45, 1.0, size=3)],
    }
    return Texture("noise", params, int(rng.integers(0, 2**31 - 1)))


def _depth_range(prim: Primitive) -> tuple[float, float]:
    z = prim.surface_points()[:, 2]
    return float(z.min()), float(z.max())


def generate_random_scene(seed: int) -> Scene:
    """Deterministic scene of 2-6 primitives with depths within [2, 50] m."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    prims = []
    while len(prims) < n:
        kind = rng.choice(["fronto", "tilted", "sphere"])
        z = float(np.exp(rng.uniform(np.log(3.0), np.log(40.0))))
        x = z * rng.uniform(-0.7, 0.7)
        y = z * rng.uniform(-0.15, 0.2)
        center = np.array([x, y, z])
        if kind == "sphere":
            radius = z * rng.uniform(0.04, 0.12)
            prim = Primitive("sphere", RigidTransform(np.eye(3), center), (radius,), _noise_texture(rng, z))
        else:
            if kind == "tilted":
                rot = axis_angle_rotation((0, 1, 0), rng.uniform(-0.9, 0.9)) @ axis_angle_rotation(
                    (1, 0, 0), rng.uniform(-0.45, 0.45)
                )
            else:
                rot = np.eye(3)
            extent = (z * rng.uniform(0.05, 0.25), z * rng.uniform(0.03, 0.12))
            prim = Primitive("plane", RigidTransform(rot, center), extent, _noise_texture(rng, z))
        lo, hi = _depth_range(prim)
        if lo < MIN_PRIMITIVE_DEPTH or hi > MAX_PRIMITIVE_DEPTH:
            continue
        prims.append(prim)
    background = Background(BACKGROUND_DEPTH, _noise_texture(rng, BACKGROUND_DEPTH))
    return Scene(tuple(prims), background)


def generate_triplet_poses(seed: int) -> tuple[RigidTransform, RigidTransform]:
    """Camera-to-world poses of the previous and next frames around an identity target."""
    rng = np.random.default_rng([seed, 1])

    def one(direction: float) -> RigidTransform:
        forward = direction * rng.uniform(0.3, 0.9)
        lateral = rng.uniform(-0.25, 0.25)
        vertical = rng.uniform(-0.03, 0.03)
        yaw = np.deg2rad(rng.uniform(-1.5, 1.5))
        return RigidTransform(axis_angle_rotation((0, 1, 0), yaw), (lateral, vertical, forward))

    return one(-1.0), one(1.0)


@dataclass(frozen=True, eq=False)
class SyntheticTriplet:
    """Target frame with previous/next frames rendered from a static scene."""

    scene: Scene
    intrinsics: Intrinsics
    target: RenderOutput
    previous: RenderOutput
    next: RenderOutput

    @property
    def to_previous(self) -> RigidTransform:
        return relative_transform(self.target.pose, self.previous.pose)

    @property
    def to_next(self) -> RigidTransform:
        return relative_transform(self.target.pose, self.next.pose)

    @property
    def sources(self) -> tuple[RenderOutput, RenderOutput]:
        return self.previous, self.next

    @property
    def transforms(self) -> tuple[RigidTransform, RigidTransform]:
        return self.to_previous, self.to_next


def render_triplet(
    seed: int,
    width: int = 640,
    height: int = 192,
    k: Optional[Intrinsics] = None,
    moving_object: bool = False,
) -> SyntheticTriplet:
    """Render the seeded scene from the seeded triplet of camera poses.

    With ``moving_object`` the nearest primitive is displaced laterally in the
    next frame only, which breaks the static-scene assumption on purpose.
    """
    k = k or Intrinsics.kitti_like(width, height)
    scene = generate_random_scene(seed)
    pose_prev, pose_next = generate_triplet_poses(seed)
    target_pose = RigidTransform.identity()
    check_scene(scene, (target_pose, pose_prev, pose_next))
    next_scene = scene
    if moving_object and scene.primitives:
        nearest = int(np.argmin([p.pose.translation[2] for p in scene.primitives]))
        shift = 0.08 * scene.primitives[nearest].pose.translation[2]
        next_scene = displace_primitive(scene, nearest, (shift, 0.0, 0.0))
    return SyntheticTriplet(
        scene,
        k,
        render(scene, k, target_pose, width, height),
        render(scene, k, pose_prev, width, height),
        render(next_scene, k, pose_next, width, height),
    )


def boundary_band(mask: np.ndarray, width: int = 1) -> np.ndarray:
    """Pixels within ``width`` of a 0/1 transition of ``mask`` (8-connected)."""
    m = np.asarray(mask).astype(bool)
    structure = np.ones((3, 3), dtype=bool)
    edge = ndimage.binary_dilation(m, structure) & ndimage.binary_dilation(~m, structure)
    if width > 0:
        edge = ndimage.binary_dilation(edge, structure, iterations=width)
    return edge


def mask_agreement(mask: np.ndarray, oracle: np.ndarray, band: int = 1) -> tuple[float, int]:
    """Fraction of pixels where ``mask`` equals ``oracle`` outside the oracle's boundary band.

    Returns ``(agreement, number_of_compared_pixels)``.
    """
    mask = np.asarray(mask)
    oracle = np.asarray(oracle)
    if mask.shape != oracle.shape:
        raise InvalidInputError("mask and oracle differ in shape")
    keep = ~boundary_band(oracle, band)
    n = int(keep.sum())
    if n == 0:
        return 1.0, 0
    return float(np.mean(mask[keep] == oracle[keep])), n
