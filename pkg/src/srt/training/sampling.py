"""Ray subsampling across target views, in the canonical frame."""

from __future__ import annotations

from typing import List, Optional

import numpy as np

from ..geometry import RigidPose
from ..scenes import SceneSample, View

__all__ = ["RayBatch", "sample_rays"]


class RayBatch:
    """Canonicalized, scale-normalized query rays with per-ray supervision.

    origins/directions: (n, 3) float64; colors (n, 3) float32;
    view_ids (n,) index into the scene's target views (appearance grouping);
    labels (n,) uint8 semantic classes when the scene carries them.
    """

    __slots__ = ("origins", "directions", "colors", "view_ids", "labels")

    def __init__(self, origins, directions, colors, view_ids, labels=None):
        self.origins = origins
        self.directions = directions
        self.colors = colors
        self.view_ids = view_ids
        self.labels = labels


def _pixel_dirs(view: View, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    intr = view.intrinsics
    d = np.stack([(u + 0.5 - intr.cx) / intr.fx,
                  (v + 0.5 - intr.cy) / intr.fy,
                  np.ones_like(u, dtype=np.float64)], axis=-1)
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    return d @ view.pose.rotation.T


def sample_rays(scene: SceneSample, n: int, rng: np.random.Generator,
                canonical_pose: RigidPose, world_scale: float,
                with_labels: bool = False) -> RayBatch:
    """n pixels uniform (with replacement) over the union of target views."""
    if n < 1:
        raise ValueError("need at least one ray")
    targets = scene.target_views
    h, w = targets[0].image.shape[:2]
    per_view = h * w
    idx = rng.integers(0, len(targets) * per_view, size=n)
    view_ids = (idx // per_view).astype(np.int64)
    pix = idx % per_view
    vv = (pix // w).astype(np.float64)
    uu = (pix % w).astype(np.float64)

    origins = np.empty((n, 3))
    dirs = np.empty((n, 3))
    colors = np.empty((n, 3), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64) if with_labels else None
    inv = canonical_pose.inverse()
    for t, view in enumerate(targets):
        m = view_ids == t
        if not m.any():
            continue
        d_world = _pixel_dirs(view, uu[m], vv[m])
        o_world = np.broadcast_to(view.pose.translation, d_world.shape)
        o = inv.transform_points(o_world)
        d = inv.transform_dirs(d_world)
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        origins[m] = o * world_scale
        dirs[m] = d
        colors[m] = view.image[vv[m].astype(int), uu[m].astype(int)]
        if with_labels:
            if scene.semantic_maps is None:
                raise ValueError(f"scene {scene.scene_id} has no semantic maps")
            labels[m] = scene.semantic_maps[t][vv[m].astype(int), uu[m].astype(int)]
    return RayBatch(origins, dirs, colors, view_ids, labels)
