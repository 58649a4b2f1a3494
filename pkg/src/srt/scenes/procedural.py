"""Procedural scene specs and the reference ray tracer.

Scenes are a handful of flat-shaded spheres and boxes over a vertical
background gradient, lit by one fixed directional light with an ambient
floor. The tracer is deterministic and pure: it is the ground-truth oracle
every learned render is compared against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from ..geometry import RigidPose, Intrinsics, generate_rays

__all__ = ["SceneObject", "SceneSpec", "SceneConfig", "generate_scene", "render_reference",
           "LIGHT_DIR", "AMBIENT", "BACKGROUND_CLASS"]

# one fixed directional light (unit vector toward the light) + ambient floor
LIGHT_DIR = np.array([0.3, 0.5, 0.8]) / np.linalg.norm([0.3, 0.5, 0.8])
AMBIENT = 0.25
BACKGROUND_CLASS = 0
_EPS = 1e-9


@dataclass(frozen=True)
class SceneObject:
    shape: str                # "sphere" | "box" (axis-aligned cube)
    center: np.ndarray        # (3,)
    size: float               # radius / half-extent
    albedo: np.ndarray        # (3,) in [0, 1]
    class_id: int             # semantic class, > 0 (0 is background)


@dataclass(frozen=True)
class SceneSpec:
    objects: List[SceneObject]
    bg_top: np.ndarray        # gradient endpoint toward +z directions
    bg_bottom: np.ndarray
    world_scale: float        # multiplies distances so cameras land in [-1,1]^3


@dataclass(frozen=True)
class SceneConfig:
    """Knobs for procedural generation, desk-scale defaults."""

    num_objects: Tuple[int, int] = (4, 8)
    center_extent: float = 2.5
    size_range: Tuple[float, float] = (0.6, 1.4)
    r_min: float = 8.0
    r_max: float = 12.0
    width: int = 48
    height: int = 48
    n_input: int = 5
    n_target: int = 3
    focal_factor: float = 1.2
    num_classes: int = 3      # background, sphere, box

    @property
    def world_scale(self) -> float:
        # canonical-frame ray origins are bounded by twice the shell radius
        return 1.0 / (2.0 * self.r_max)

    @property
    def near(self) -> float:
        return max(self.r_min - 2.0 * self.center_extent, 0.5) * self.world_scale

    @property
    def far(self) -> float:
        return (self.r_max + 2.0 * self.center_extent) * self.world_scale


_CLASS_BY_SHAPE = {"sphere": 1, "box": 2}


def generate_scene(rng: np.random.Generator, cfg: SceneConfig = SceneConfig()) -> SceneSpec:
    """Deterministic scene spec given the rng state."""
    lo, hi = cfg.num_objects
    if not (1 <= lo <= hi):
        raise ValueError(f"invalid num_objects range {cfg.num_objects}")
    n = int(rng.integers(lo, hi + 1))
    objects = []
    for _ in range(n):
        shape = "sphere" if rng.random() < 0.5 else "box"
        objects.append(SceneObject(
            shape=shape,
            center=rng.uniform(-cfg.center_extent, cfg.center_extent, size=3),
            size=float(rng.uniform(*cfg.size_range)),
            albedo=rng.uniform(0.1, 0.95, size=3),
            class_id=_CLASS_BY_SHAPE[shape],
        ))
    bg_top = rng.uniform(0.2, 0.9, size=3)
    bg_bottom = rng.uniform(0.05, 0.6, size=3)
    return SceneSpec(objects=objects, bg_top=bg_top, bg_bottom=bg_bottom,
                     world_scale=cfg.world_scale)


def _intersect_sphere(o, d, center, radius):
    """Smallest t > eps of |o + t d - c| = r, else +inf. o, d: (..., 3)."""
    L = o - center
    b = np.sum(d * L, axis=-1)
    c = np.sum(L * L, axis=-1) - radius * radius
    disc = b * b - c                      # d is unit so a == 1
    t = np.full(o.shape[:-1], np.inf)
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t1 = -b - sq
    t2 = -b + sq
    cand = np.where(t1 > _EPS, t1, np.where(t2 > _EPS, t2, np.inf))
    t = np.where(ok, cand, np.inf)
    return t


def _intersect_box(o, d, center, half):
    """Slab test against the axis-aligned cube [c-h, c+h]."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
    t_lo = (center - half - o) * inv
    t_hi = (center + half - o) * inv
    t_near = np.nanmax(np.minimum(t_lo, t_hi), axis=-1)
    t_far = np.nanmin(np.maximum(t_lo, t_hi), axis=-1)
    hit = (t_far >= np.maximum(t_near, _EPS)) & np.isfinite(t_far)
    t = np.where(t_near > _EPS, t_near, t_far)
    return np.where(hit, t, np.inf)


def _normals(spec: SceneSpec, idx, points):
    normals = np.zeros_like(points)
    for k, obj in enumerate(spec.objects):
        mask = idx == k
        if not mask.any():
            continue
        if obj.shape == "sphere":
            n = points[mask] - obj.center
            n /= np.linalg.norm(n, axis=-1, keepdims=True)
        else:
            rel = (points[mask] - obj.center) / obj.size
            axis = np.argmax(np.abs(rel), axis=-1)
            n = np.zeros_like(rel)
            n[np.arange(len(rel)), axis] = np.sign(rel[np.arange(len(rel)), axis])
        normals[mask] = n
    return normals


def render_reference(spec: SceneSpec, pose: RigidPose, intr: Intrinsics,
                     width: int, height: int):
    """Trace primary rays through the scene.

    Returns (rgb, depth, sem): rgb (H, W, 3) float in [0, 1], depth (H, W)
    hit distance with +inf for background, sem (H, W) uint8 class ids
    (0 = background).
    """
    o, d = generate_rays(pose, intr, width, height)
    if spec.objects:
        ts = np.stack([
            _intersect_sphere(o, d, obj.center, obj.size) if obj.shape == "sphere"
            else _intersect_box(o, d, obj.center, obj.size)
            for obj in spec.objects
        ])                                             # (n_obj, H, W)
        idx = np.argmin(ts, axis=0)
        depth = np.take_along_axis(ts, idx[None], axis=0)[0]
    else:
        idx = np.zeros((height, width), dtype=int)
        depth = np.full((height, width), np.inf)
    hit = np.isfinite(depth)

    # background gradient over direction elevation
    tgrad = 0.5 * (d[..., 2] + 1.0)
    rgb = spec.bg_bottom + tgrad[..., None] * (spec.bg_top - spec.bg_bottom)

    sem = np.full((height, width), BACKGROUND_CLASS, dtype=np.uint8)
    if hit.any():
        pts = o + np.where(hit, depth, 0.0)[..., None] * d
        normals = _normals(spec, np.where(hit, idx, -1), pts)
        lam = np.clip(np.sum(normals * LIGHT_DIR, axis=-1), 0.0, None)
        shade = AMBIENT + (1.0 - AMBIENT) * lam
        albedo = np.array([obj.albedo for obj in spec.objects])
        classes = np.array([obj.class_id for obj in spec.objects], dtype=np.uint8)
        rgb = np.where(hit[..., None], albedo[idx] * shade[..., None], rgb)
        sem = np.where(hit, classes[idx], sem)
    return np.clip(rgb, 0.0, 1.0), depth, sem
