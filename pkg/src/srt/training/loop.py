"""End-to-end optimization: the training step, schedule, state, and loop.

Training is a pure function of (dataset, config, seed): one rng drives scene
selection, canonical-view shuffling, pose noise, ray sampling, and volumetric
offsets, in a fixed call order, so runs are reproducible bit for bit and a
save/load/resume cycle continues the identical trajectory.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, asdict, field, replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from ..tensor import Tensor, AdamState, adam_step, backward
from ..tensor.engine import active_tape
from ..geometry import perturb_pose
from ..scenes import SceneSample
from ..model import SrtConfig, init_params, encode, render_query
from ..model.network import appearance_embed
from .losses import reconstruction_loss
from .sampling import sample_rays

__all__ = ["TrainConfig", "TrainState", "TrainingError", "lr_schedule",
           "train_step", "fit", "save_state", "load_state"]


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_scenes: int = 8
    rays_per_batch: int = 1024
    total_steps: int = 50_000
    lr_init: float = 1e-4
    lr_final: float = 1.6e-5
    warmup_steps: int = 500
    pose_noise_sigma: float = 0.0
    grad_clip: float = 1.0
    seed: int = 0
    log_every: int = 50
    checkpoint_every: int = 2000
    keep_checkpoints: int = 3

    def __post_init__(self):
        if self.warmup_steps >= self.total_steps:
            raise ValueError("warmup_steps must be < total_steps")
        if self.rays_per_batch < 1 or self.batch_scenes < 1:
            raise ValueError("rays_per_batch and batch_scenes must be >= 1")

    def to_dict(self):
        return asdict(self)


def lr_schedule(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to lr_init, cosine decay to lr_final, then constant."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if step < cfg.warmup_steps:
        return cfg.lr_init * step / cfg.warmup_steps
    if step >= cfg.total_steps:
        return cfg.lr_final
    prog = (step - cfg.warmup_steps) / (cfg.total_steps - cfg.warmup_steps)
    return cfg.lr_final + 0.5 * (cfg.lr_init - cfg.lr_final) * (1.0 + math.cos(math.pi * prog))


@dataclass
class TrainState:
    step: int
    params: Dict[str, Tensor]
    adam: AdamState
    rng: np.random.Generator
    model_cfg: SrtConfig
    train_cfg: TrainConfig
    world_scale: float = 1.0
    loss_history: List[float] = field(default_factory=list)

    @staticmethod
    def fresh(model_cfg: SrtConfig, train_cfg: TrainConfig, world_scale: float = 1.0,
              params: Optional[Dict[str, Tensor]] = None) -> "TrainState":
        rng = np.random.default_rng(train_cfg.seed)
        if params is None:
            params = init_params(model_cfg, rng)
        return TrainState(step=0, params=params, adam=AdamState(), rng=rng,
                          model_cfg=model_cfg, train_cfg=train_cfg, world_scale=world_scale)


def _global_grad_norm(params: Dict[str, Tensor]) -> float:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    return math.sqrt(total)


def _clip_grads(params: Dict[str, Tensor], max_norm: float) -> float:
    norm = _global_grad_norm(params)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm


def _scene_forward(state: TrainState, scene: SceneSample, n_rays: int):
    """Shuffle the canonical view, optionally corrupt non-canonical poses,
    encode, and decode a ray subsample. Returns the scene's loss tensor."""
    cfg = state.model_cfg
    tcfg = state.train_cfg
    perm = state.rng.permutation(len(scene.input_views))
    views = [scene.input_views[i] for i in perm]
    poses = [v.pose for v in views]
    if tcfg.pose_noise_sigma > 0 and cfg.posed:
        # the reference camera stays exact; all others get tangent-space noise
        poses = [poses[0]] + [perturb_pose(p, tcfg.pose_noise_sigma, state.rng)
                              for p in poses[1:]]
    images = np.stack([v.image for v in views])
    latent = encode(images, poses if cfg.posed else None,
                    [v.intrinsics for v in views] if cfg.posed else None,
                    state.params, cfg, world_scale=state.world_scale)
    canonical = views[0].pose
    batch = sample_rays(scene, n_rays, state.rng, canonical, state.world_scale)

    if cfg.appearance:
        losses = []
        for t in np.unique(batch.view_ids):
            m = batch.view_ids == t
            app = appearance_embed(scene.target_views[int(t)].image, state.params, cfg)
            color, _ = render_query(latent, batch.origins[m], batch.directions[m],
                                    state.params, cfg, rng=state.rng, appearance=app)
            losses.append(reconstruction_loss(color, batch.colors[m]) * (float(m.sum()) / n_rays))
        loss = losses[0]
        for extra in losses[1:]:
            loss = loss + extra
        return loss
    color, _ = render_query(latent, batch.origins, batch.directions,
                            state.params, cfg, rng=state.rng)
    return reconstruction_loss(color, batch.colors)


def train_step(state: TrainState, batch: List[SceneSample]) -> dict:
    """One optimization step over a batch of scenes. Returns metrics."""
    tcfg = state.train_cfg
    n_rays = max(1, tcfg.rays_per_batch // len(batch))
    for p in state.params.values():
        p.zero_grad()
    loss = None
    try:
        for scene in batch:
            part = _scene_forward(state, scene, n_rays) * (1.0 / len(batch))
            loss = part if loss is None else loss + part
        loss_val = float(loss.data)
        if not np.isfinite(loss_val):
            raise TrainingError(
                f"non-finite loss {loss_val} at step {state.step} on scenes "
                f"{[s.scene_id for s in batch]}")
        backward(loss)
    except Exception:
        active_tape().clear()
        raise
    grad_norm = _clip_grads(state.params, tcfg.grad_clip)
    lr = lr_schedule(state.step, tcfg)
    if lr > 0:
        adam_step(state.params, state.adam, lr)
    state.step += 1
    state.loss_history.append(loss_val)
    return {"step": state.step, "loss": loss_val, "lr": lr, "grad_norm": grad_norm}


def fit(state: TrainState, samples: List[SceneSample], steps: Optional[int] = None,
        out_dir=None, log=None) -> TrainState:
    """Run `steps` optimization steps (default: up to total_steps), drawing
    batches uniformly from `samples`. Writes metrics.jsonl and rotating
    checkpoints when out_dir is given."""
    tcfg = state.train_cfg
    steps = steps if steps is not None else tcfg.total_steps - state.step
    out_dir = Path(out_dir) if out_dir is not None else None
    metrics_f = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_f = open(out_dir / "metrics.jsonl", "a")
    t0 = time.monotonic()
    try:
        for _ in range(steps):
            picks = state.rng.integers(0, len(samples), size=min(tcfg.batch_scenes, len(samples)))
            metrics = train_step(state, [samples[i] for i in picks])
            if metrics_f and (state.step % tcfg.log_every == 0 or state.step == 1):
                metrics["wall_time"] = round(time.monotonic() - t0, 3)
                metrics_f.write(json.dumps(metrics) + "\n")
                metrics_f.flush()
            if log and (state.step % tcfg.log_every == 0 or state.step == 1):
                log(metrics)
            if out_dir is not None and tcfg.checkpoint_every > 0 \
                    and state.step % tcfg.checkpoint_every == 0:
                save_state(out_dir / f"state_{state.step:07d}.srt", state)
                _prune_checkpoints(out_dir, tcfg.keep_checkpoints)
    finally:
        if metrics_f:
            metrics_f.close()
    return state


def _prune_checkpoints(out_dir: Path, keep: int) -> None:
    ckpts = sorted(out_dir.glob("state_*.srt"))
    for old in ckpts[:-keep] if keep > 0 else []:
        old.unlink()


def save_state(path, state: TrainState) -> None:
    """Full resumable snapshot: params, Adam moments, step, rng state."""
    from ..tensor import save_checkpoint
    tensors = {f"param.{k}": v for k, v in state.params.items()}
    tensors.update({f"adam.m.{k}": v for k, v in state.adam.m.items()})
    tensors.update({f"adam.v.{k}": v for k, v in state.adam.v.items()})
    meta = {
        "step": state.step,
        "adam_step": state.adam.step,
        "rng_state": json.loads(json.dumps(state.rng.bit_generator.state)),
        "model_config": state.model_cfg.to_dict(),
        "train_config": state.train_cfg.to_dict(),
        "world_scale": state.world_scale,
        "fingerprint": state.model_cfg.fingerprint(),
    }
    save_checkpoint(path, tensors, meta)


def load_state(path) -> TrainState:
    from ..tensor import load_checkpoint
    meta, arrays = load_checkpoint(path)
    model_cfg = SrtConfig.from_dict(meta["model_config"])
    train_cfg = TrainConfig(**meta["train_config"])
    params, m, v = {}, {}, {}
    for name, arr in arrays.items():
        kind, key = name.split(".", 1)
        if kind == "param":
            params[key] = Tensor(arr, requires_grad=True, name=key)
        elif kind == "adam":
            sub, key = key.split(".", 1)
            (m if sub == "m" else v)[key] = arr.copy()
    adam = AdamState(step=meta["adam_step"], m=m, v=v)
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]
    return TrainState(step=meta["step"], params=params, adam=adam, rng=rng,
                      model_cfg=model_cfg, train_cfg=train_cfg,
                      world_scale=meta.get("world_scale", 1.0))
