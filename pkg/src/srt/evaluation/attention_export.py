"""Attention-weight inspection: capture, reshape to patch grids, export.

Encoder maps answer "which input patches does this patch attend into";
decoder maps answer the same for a single queried ray. Instrumentation never
changes the computation; captured rows sum to one per query.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from PIL import Image

from ..scenes import SceneSample
from ..model import SceneModel, AttentionRecord

__all__ = ["attention_maps", "export_attention"]


def _grid_maps(weights_row: np.ndarray, i_views: int, gh: int, gw: int) -> np.ndarray:
    """One query's weights over I*h*w keys -> (I, h, w) heatmaps."""
    return weights_row.reshape(i_views, gh, gw)


def attention_maps(model: SceneModel, scene: SceneSample,
                   query_pixel: Tuple[int, int],
                   encoder_token: Optional[Tuple[int, int, int]] = None) -> Dict[str, List[np.ndarray]]:
    """Capture encoder self-attention for one patch token and decoder
    cross-attention for one rendered ray.

    query_pixel: (u, v) in the first target view. encoder_token: (view, row,
    col) patch; defaults to the patch under the query pixel in view 0.
    Returns {"enc": [per-layer (I,h,w)], "dec": [...]}, head-averaged.
    """
    cfg = model.cfg
    gh, gw = cfg.grid_height, cfg.grid_width
    i_views = len(scene.input_views)
    k = cfg.patch_factor
    u, v = query_pixel
    if encoder_token is None:
        encoder_token = (0, min(v // k, gh - 1), min(u // k, gw - 1))

    rec = AttentionRecord()
    latent = model.encode_scene(np.stack([x.image for x in scene.input_views]),
                                [x.pose for x in scene.input_views],
                                [x.intrinsics for x in scene.input_views],
                                recorder=rec)
    enc_maps = []
    tok = (encoder_token[0] * gh + encoder_token[1]) * gw + encoder_token[2]
    for w in rec.by_name("enc"):
        enc_maps.append(_grid_maps(w.mean(axis=0)[tok], i_views, gh, gw))

    dec_rec = AttentionRecord()
    tv = scene.target_views[0]
    o, d = model.canonical_rays(latent, tv.pose, tv.intrinsics,
                                tv.image.shape[1], tv.image.shape[0])
    ray = v * tv.image.shape[1] + u
    model.decode_chunked(latent, o[ray:ray + 1], d[ray:ray + 1], recorder=dec_rec)
    dec_maps = [_grid_maps(w.mean(axis=0)[0], i_views, gh, gw)
                for w in dec_rec.by_name("dec")]
    return {"enc": enc_maps, "dec": dec_maps}


def _overlay(view_img: np.ndarray, heat: np.ndarray, k: int) -> np.ndarray:
    """Red heatmap (upsampled by the patch factor) blended over the view."""
    hm = np.kron(heat / max(heat.max(), 1e-9), np.ones((k, k)))
    base = np.asarray(view_img, dtype=np.float64)
    out = base * 0.45
    out[..., 0] += 0.55 * hm
    out[..., 1] += 0.15 * hm
    return np.clip(out, 0, 1)


def export_attention(model: SceneModel, scene: SceneSample, out_dir,
                     query_pixel: Tuple[int, int] = (24, 24)) -> dict:
    """Write per-layer overlay PNGs and the raw weights (.npz). Returns maps."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    maps = attention_maps(model, scene, query_pixel)
    raw = {}
    k = model.cfg.patch_factor
    for name, layers in maps.items():
        for layer, grid in enumerate(layers):
            raw[f"{name}_layer{layer}"] = grid
            tiles = [_overlay(v.image, grid[i], k)
                     for i, v in enumerate(scene.input_views)]
            strip = np.concatenate(tiles, axis=1)
            Image.fromarray((strip * 255).astype(np.uint8)).save(
                out_dir / f"attention_{name}_l{layer}.png")
    np.savez(out_dir / "attention_raw.npz", **raw)
    return maps
