"""Semantic head training: a fresh decoder over a frozen scene encoder."""

from __future__ import annotations

from typing import Dict, List

import numpy as np

from ..tensor import Tensor, AdamState, adam_step, backward, no_grad
from ..tensor.engine import active_tape
from ..model import SrtConfig, init_semantic_params, semantic_decode, encode
from .loop import TrainConfig, TrainingError, lr_schedule, _clip_grads
from .losses import cross_entropy
from .sampling import sample_rays

__all__ = ["train_semantic_head"]


def train_semantic_head(base_params: Dict[str, Tensor], cfg: SrtConfig,
                        samples: List, tcfg: TrainConfig, num_classes: int,
                        world_scale: float = 1.0, steps: int | None = None,
                        log=None) -> Dict[str, Tensor]:
    """Train `sem.*` parameters with cross-entropy on sampled rays.

    The RGB-trained parameters are used frozen (requires_grad off, so the
    encoder forward never even records on the tape). Returns the semantic
    parameters; base_params are not touched.
    """
    if num_classes < 2:
        raise TrainingError(f"semantic training needs >= 2 classes, got {num_classes}")
    cfg = cfg.with_overrides(semantic_classes=num_classes)
    frozen = {k: Tensor(v.data, requires_grad=False, name=k) for k, v in base_params.items()}
    rng = np.random.default_rng(tcfg.seed)
    sem_params = init_semantic_params(cfg, rng)
    run = dict(frozen)
    run.update(sem_params)
    adam = AdamState()
    steps = steps if steps is not None else tcfg.total_steps
    for step in range(steps):
        picks = rng.integers(0, len(samples), size=min(tcfg.batch_scenes, len(samples)))
        for p in sem_params.values():
            p.zero_grad()
        loss = None
        n_rays = max(1, tcfg.rays_per_batch // len(picks))
        try:
            for i in picks:
                scene = samples[i]
                perm = rng.permutation(len(scene.input_views))
                views = [scene.input_views[j] for j in perm]
                with no_grad():
                    latent = encode(np.stack([v.image for v in views]),
                                    [v.pose for v in views] if cfg.posed else None,
                                    [v.intrinsics for v in views] if cfg.posed else None,
                                    run, cfg, world_scale=world_scale)
                batch = sample_rays(scene, n_rays, rng, views[0].pose, world_scale,
                                    with_labels=True)
                if batch.labels.max() >= num_classes:
                    raise TrainingError(
                        f"scene {scene.scene_id}: class id {batch.labels.max()} "
                        f">= num_classes {num_classes}")
                logits = semantic_decode(latent, batch.origins, batch.directions, run, cfg)
                part = cross_entropy(logits, batch.labels) * (1.0 / len(picks))
                loss = part if loss is None else loss + part
            if not np.isfinite(float(loss.data)):
                raise TrainingError(f"non-finite semantic loss at step {step}")
            backward(loss)
        except Exception:
            active_tape().clear()
            raise
        _clip_grads(sem_params, tcfg.grad_clip)
        lr = lr_schedule(step, tcfg)
        if lr > 0:
            adam_step(sem_params, adam, lr)
        if log and step % tcfg.log_every == 0:
            log({"step": step, "sem_loss": float(loss.data), "lr": lr})
    return sem_params
