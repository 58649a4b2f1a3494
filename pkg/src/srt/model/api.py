"""High-level wrapper: encode scenes, render full images, load checkpoints.

A `SceneModel` owns a frozen (cfg, params) pair. Rendering canonicalizes
world-frame query cameras against the latent's canonical pose, applies the
stored world scale, and decodes rays in chunks under no_grad.
"""

from __future__ import annotations

from typing import Dict, List, Optional

import numpy as np

from ..tensor import Tensor, no_grad
from ..geometry import RigidPose, Intrinsics, generate_rays, to_canonical
from .config import SrtConfig
from .params import load_model, save_model
from . import network
from .network import SetLatent, AttentionRecord

__all__ = ["SceneModel"]


class SceneModel:
    def __init__(self, cfg: SrtConfig, params: Dict[str, Tensor], world_scale: float = 1.0):
        self.cfg = cfg
        self.params = params
        self.world_scale = world_scale

    @classmethod
    def from_checkpoint(cls, path, force: bool = False) -> "SceneModel":
        cfg, params, meta = load_model(path, force=force)
        return cls(cfg, params, world_scale=float(meta.get("world_scale", 1.0)))

    def save(self, path, extra: dict | None = None) -> None:
        extra = dict(extra or {})
        extra.setdefault("world_scale", self.world_scale)
        save_model(path, self.cfg, self.params, extra)

    # -- encoding -----------------------------------------------------------

    def encode_scene(self, images: np.ndarray, poses: Optional[List[RigidPose]] = None,
                     intrinsics: Optional[List[Intrinsics]] = None,
                     recorder: Optional[AttentionRecord] = None) -> SetLatent:
        """Encode once; the returned latent is immutable and shareable.

        For a posed model, poses/intrinsics are required. For an unposed one
        they are optional: when given, only the first (canonical) pose is
        used, to anchor query rays; when absent, queries are interpreted
        relative to the first input view's camera.
        """
        with no_grad():
            if self.cfg.posed:
                return network.encode(images, poses, intrinsics, self.params, self.cfg,
                                      world_scale=self.world_scale, recorder=recorder)
            latent = network.encode(images, None, None, self.params, self.cfg,
                                    world_scale=self.world_scale, recorder=recorder)
            if poses:
                latent.canonical_pose = poses[0]
            return latent

    # -- decoding -----------------------------------------------------------

    def canonical_rays(self, latent: SetLatent, pose: RigidPose, intr: Intrinsics,
                       width: int, height: int):
        """World-frame query camera -> canonical, scale-normalized rays."""
        o, d = generate_rays(pose, intr, width, height)
        o, d = to_canonical(o.reshape(-1, 3), d.reshape(-1, 3), latent.canonical_pose)
        return o * latent.world_scale, d

    def decode_chunked(self, latent: SetLatent, origins: np.ndarray, dirs: np.ndarray,
                       chunk: int = 16384, appearance: Optional[Tensor] = None,
                       recorder: Optional[AttentionRecord] = None):
        """Decode canonical rays in chunks. Returns (rgb (R,3), depth or None)."""
        out, depths = [], []
        with no_grad():
            for i in range(0, origins.shape[0], chunk):
                color, depth = network.render_query(
                    latent, origins[i:i + chunk], dirs[i:i + chunk],
                    self.params, self.cfg, appearance=appearance, recorder=recorder)
                out.append(color.data.astype(np.float32))
                if depth is not None:
                    depths.append(depth)
        rgb = np.concatenate(out, axis=0)
        return rgb, (np.concatenate(depths) if depths else None)

    def render_image(self, latent: SetLatent, pose: RigidPose, intr: Intrinsics,
                     width: int, height: int, chunk: int = 16384,
                     appearance: Optional[Tensor] = None,
                     recorder: Optional[AttentionRecord] = None):
        """Render one view. Returns (image (H,W,3) float32, depth (H,W) or None)."""
        o, d = self.canonical_rays(latent, pose, intr, width, height)
        rgb, depth = self.decode_chunked(latent, o, d, chunk=chunk,
                                         appearance=appearance, recorder=recorder)
        img = rgb.reshape(height, width, 3)
        return img, (depth.reshape(height, width) if depth is not None else None)

    def render_semantic(self, latent: SetLatent, pose: RigidPose, intr: Intrinsics,
                        width: int, height: int, chunk: int = 16384) -> np.ndarray:
        """Per-pixel argmax class map from the semantic head."""
        o, d = self.canonical_rays(latent, pose, intr, width, height)
        preds = []
        with no_grad():
            for i in range(0, o.shape[0], chunk):
                logits = network.semantic_decode(latent, o[i:i + chunk], d[i:i + chunk],
                                                 self.params, self.cfg)
                preds.append(np.argmax(logits.data, axis=-1))
        return np.concatenate(preds).reshape(height, width).astype(np.uint8)

    def appearance_from_image(self, image: np.ndarray) -> Tensor:
        with no_grad():
            return network.appearance_embed(image, self.params, self.cfg)
