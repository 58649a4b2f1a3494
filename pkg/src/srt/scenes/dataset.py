"""On-disk multi-view dataset: layout, writers, loaders.

Layout (see docs/formats.md):

    <root>/meta.json                 world_scale, num_classes, near/far,
                                     image size, per-split seed ranges
    <root>/<scene_id>/cameras.json   per view: role (input|target),
                                     camera_to_world 4x4 row-major,
                                     intrinsics 3x3 row-major
    <root>/<scene_id>/view_<k>.png   8-bit RGB
    <root>/<scene_id>/sem_<k>.png    class ids in the red channel (optional)

Train and test scenes draw from disjoint seed ranges so held-out scenes
always contain novel content.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
from PIL import Image

from ..geometry import RigidPose, Intrinsics, sample_shell_cameras
from .procedural import SceneConfig, generate_scene, render_reference

__all__ = ["View", "SceneSample", "DatasetError", "TEST_SEED_OFFSET",
           "generate_samples", "write_dataset", "read_dataset", "read_meta",
           "read_scene", "generate_dataset"]

# test scene seeds start this far above the train base seed
TEST_SEED_OFFSET = 1_000_000


class DatasetError(RuntimeError):
    pass


@dataclass
class View:
    image: np.ndarray          # (H, W, 3) float32 in [0, 1]
    pose: RigidPose
    intrinsics: Intrinsics


@dataclass
class SceneSample:
    scene_id: str
    input_views: List[View]
    target_views: List[View]
    semantic_maps: Optional[List[np.ndarray]] = None   # per target, (H, W) uint8

    def __post_init__(self):
        if not self.input_views:
            raise DatasetError(f"scene {self.scene_id}: needs at least one input view")
        shapes = {v.image.shape for v in self.input_views + self.target_views}
        if len(shapes) != 1:
            raise DatasetError(f"scene {self.scene_id}: inconsistent image shapes {shapes}")


def _make_sample(scene_seed: int, cfg: SceneConfig, scene_id: str,
                 with_semantics: bool = True) -> SceneSample:
    rng = np.random.default_rng(scene_seed)
    spec = generate_scene(rng, cfg)
    cams = sample_shell_cameras(rng, cfg.n_input + cfg.n_target, cfg.r_min, cfg.r_max,
                                focal_factor=cfg.focal_factor,
                                width=cfg.width, height=cfg.height)
    views = []
    sems = []
    for pose, intr in cams:
        rgb, _, sem = render_reference(spec, pose, intr, cfg.width, cfg.height)
        views.append(View(rgb.astype(np.float32), pose, intr))
        sems.append(sem)
    return SceneSample(
        scene_id=scene_id,
        input_views=views[:cfg.n_input],
        target_views=views[cfg.n_input:],
        semantic_maps=sems[cfg.n_input:] if with_semantics else None,
    )


def generate_samples(base_seed: int, count: int, cfg: SceneConfig = SceneConfig(),
                     prefix: str = "scene") -> List[SceneSample]:
    """In-memory dataset: scene i uses seed base_seed + i."""
    return [_make_sample(base_seed + i, cfg, f"{prefix}_{base_seed + i:07d}")
            for i in range(count)]


def _save_png(path: Path, arr_u8: np.ndarray) -> None:
    Image.fromarray(arr_u8).save(path, format="PNG")


def write_dataset(samples: List[SceneSample], root, meta: dict) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
    for s in samples:
        sdir = root / s.scene_id
        sdir.mkdir(exist_ok=True)
        cams = []
        k = 0
        for role, views in (("input", s.input_views), ("target", s.target_views)):
            for j, v in enumerate(views):
                cams.append({
                    "role": role,
                    "camera_to_world": v.pose.matrix().tolist(),
                    "intrinsics": v.intrinsics.matrix().tolist(),
                })
                _save_png(sdir / f"view_{k}.png",
                          np.clip(np.round(v.image * 255.0), 0, 255).astype(np.uint8))
                if role == "target" and s.semantic_maps is not None:
                    sem = s.semantic_maps[j]
                    rgb = np.zeros(sem.shape + (3,), dtype=np.uint8)
                    rgb[..., 0] = sem
                    _save_png(sdir / f"sem_{k}.png", rgb)
                k += 1
        (sdir / "cameras.json").write_text(json.dumps(cams))


def read_meta(root) -> dict:
    root = Path(root)
    meta_path = root / "meta.json"
    if not meta_path.exists():
        raise DatasetError(f"no meta.json under {root}")
    return json.loads(meta_path.read_text())


def read_scene(sdir) -> SceneSample:
    """Load one scene directory (cameras.json + view/sem PNGs)."""
    sdir = Path(sdir)
    cam_path = sdir / "cameras.json"
    if not cam_path.exists():
        raise DatasetError(f"scene {sdir.name}: missing cameras.json")
    cams = json.loads(cam_path.read_text())
    inputs, targets, sems = [], [], []
    for k, cam in enumerate(cams):
        img_path = sdir / f"view_{k}.png"
        if not img_path.exists():
            raise DatasetError(f"scene {sdir.name}: missing {img_path.name}")
        img = np.asarray(Image.open(img_path).convert("RGB"), dtype=np.float32) / 255.0
        view = View(img, RigidPose.from_matrix(cam["camera_to_world"]),
                    Intrinsics.from_matrix(cam["intrinsics"]))
        if cam["role"] == "input":
            inputs.append(view)
        else:
            targets.append(view)
            sem_path = sdir / f"sem_{k}.png"
            if sem_path.exists():
                sems.append(np.asarray(Image.open(sem_path))[..., 0].astype(np.uint8))
    return SceneSample(sdir.name, inputs, targets,
                       semantic_maps=sems if len(sems) == len(targets) and sems else None)


def read_dataset(root, limit: Optional[int] = None) -> List[SceneSample]:
    """Load every scene directory under root (sorted by id)."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    scene_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if limit is not None:
        scene_dirs = scene_dirs[:limit]
    return [read_scene(sdir) for sdir in scene_dirs]


def generate_dataset(root, count: int, base_seed: int, cfg: SceneConfig = SceneConfig(),
                     split: str = "train") -> List[SceneSample]:
    """Render `count` scenes to disk. Test splits shift into a disjoint seed range."""
    seed0 = base_seed + (TEST_SEED_OFFSET if split == "test" else 0)
    samples = generate_samples(seed0, count, cfg)
    meta = {
        "world_scale": cfg.world_scale,
        "num_classes": cfg.num_classes,
        "near": cfg.near,
        "far": cfg.far,
        "width": cfg.width,
        "height": cfg.height,
        "n_input": cfg.n_input,
        "n_target": cfg.n_target,
        "split": split,
        "seed_range": [seed0, seed0 + count],
    }
    write_dataset(samples, root, meta)
    return samples
