"""Scene-level evaluation: per-scene metrics, the mean-color oracle, reports,
and rendered comparison panels."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import List, Optional

import numpy as np
from PIL import Image, ImageDraw

from ..scenes import SceneSample
from ..model import SceneModel
from .metrics import psnr, ssim, PSNR_CAP_DB

__all__ = ["EvalReport", "mean_color_oracle", "evaluate_scene", "evaluate_model",
           "render_panel"]


@dataclass
class EvalReport:
    per_scene: List[dict] = field(default_factory=list)
    psnr_mean: float = 0.0
    ssim_mean: float = 0.0
    oracle_psnr_mean: float = 0.0
    encode_seconds: Optional[float] = None
    render_fps: Optional[float] = None
    scenario_seconds: Optional[float] = None
    config_fingerprint: str = ""

    def finalize(self) -> "EvalReport":
        if self.per_scene:
            self.psnr_mean = float(np.mean([s["psnr"] for s in self.per_scene]))
            self.ssim_mean = float(np.mean([s["ssim"] for s in self.per_scene]))
            self.oracle_psnr_mean = float(np.mean([s["oracle_psnr"] for s in self.per_scene]))
        return self

    def to_json(self, path=None) -> str:
        blob = json.dumps(asdict(self), indent=1)
        if path is not None:
            Path(path).write_text(blob)
        return blob


def mean_color_oracle(scene: SceneSample) -> float:
    """PSNR of the best constant predictor: the scene's mean target color."""
    pixels = np.concatenate([v.image.reshape(-1, 3)
                             for v in scene.target_views]).astype(np.float64)
    mean = pixels.mean(axis=0)
    mse = float(np.mean((pixels - mean) ** 2))
    if mse <= 10 ** (-PSNR_CAP_DB / 10.0):
        return PSNR_CAP_DB
    return float(10.0 * np.log10(1.0 / mse))


def evaluate_scene(model: SceneModel, scene: SceneSample,
                   canonical_index: int = 0) -> dict:
    """Encode once, render every target view, and score it."""
    order = [canonical_index] + [i for i in range(len(scene.input_views))
                                 if i != canonical_index]
    views = [scene.input_views[i] for i in order]
    latent = model.encode_scene(np.stack([v.image for v in views]),
                                [v.pose for v in views],
                                [v.intrinsics for v in views])
    h, w = scene.target_views[0].image.shape[:2]
    psnrs, ssims, renders = [], [], []
    for tv in scene.target_views:
        img, _ = model.render_image(latent, tv.pose, tv.intrinsics, w, h)
        renders.append(img)
        psnrs.append(psnr(img, tv.image))
        ssims.append(ssim(img, tv.image))
    return {
        "scene_id": scene.scene_id,
        "psnr": float(np.mean(psnrs)),
        "ssim": float(np.mean(ssims)),
        "oracle_psnr": mean_color_oracle(scene),
        "renders": renders,
    }


def evaluate_model(model: SceneModel, scenes: List[SceneSample],
                   rng: Optional[np.random.Generator] = None,
                   keep_renders: bool = False) -> EvalReport:
    """Aggregate report over scenes. A rng randomizes the canonical view per
    scene (the reference frame is re-chosen at test time); None fixes view 0."""
    report = EvalReport(config_fingerprint=model.cfg.fingerprint())
    for scene in scenes:
        canon = int(rng.integers(len(scene.input_views))) if rng is not None else 0
        entry = evaluate_scene(model, scene, canonical_index=canon)
        if not keep_renders:
            entry.pop("renders")
        report.per_scene.append(entry)
    return report.finalize()


def _to_u8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)


def render_panel(scene: SceneSample, renders: List[np.ndarray], path,
                 scale: int = 2) -> None:
    """Comparison strip: input views | per-target (prediction above target),
    with a PSNR caption under each prediction column."""
    h, w = scene.input_views[0].image.shape[:2]
    pad, caption = 4, 12
    cols = len(scene.input_views) + len(scene.target_views)
    canvas = Image.new("RGB", (cols * (w + pad) + pad, 2 * h + 2 * pad + caption),
                       (24, 24, 24))
    draw = ImageDraw.Draw(canvas)
    x = pad
    for v in scene.input_views:
        canvas.paste(Image.fromarray(_to_u8(v.image)), (x, pad))
        x += w + pad
    for tv, pred in zip(scene.target_views, renders):
        canvas.paste(Image.fromarray(_to_u8(pred)), (x, pad))
        canvas.paste(Image.fromarray(_to_u8(tv.image)), (x, h + 2 * pad))
        draw.text((x, 2 * h + 2 * pad), f"{psnr(pred, tv.image):.1f}dB", fill=(220, 220, 220))
        x += w + pad
    if scale != 1:
        canvas = canvas.resize((canvas.width * scale, canvas.height * scale), Image.NEAREST)
    canvas.save(path)
