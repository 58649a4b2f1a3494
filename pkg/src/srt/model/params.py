"""Parameter construction, checksums, and checkpoint plumbing for the model.

Naming scheme (parameter dict keys):
    cnn.block{i}.conv{1,2}.{w,b}     backbone convs (stride 1 then stride 2)
    cnn.proj.{w,b}                   1x1 projection to token width
    embed.pos                        shared (h, w, d) patch-position table
    embed.cam0 / embed.rest          camera-id vectors (canonical vs others)
    enc.l{i}...                      encoder blocks + enc.ln_out
    dec...                           ray decoder (query proj, blocks, out MLP)
    flat.l{i}.{w,b}                  deep-MLP variant replacing the decoder
    app...                           appearance encoder
    sem...                           semantic decoder (mirrors dec)
"""

from __future__ import annotations

import hashlib
from typing import Dict

import numpy as np

from ..tensor import Tensor, save_checkpoint, load_checkpoint, CheckpointError
from .config import SrtConfig

__all__ = ["init_params", "init_semantic_params", "params_checksum",
           "save_model", "load_model", "parameter_groups", "ModelError"]


class ModelError(RuntimeError):
    pass


def _kaiming_conv(rng, kh, kw, cin, cout, dtype):
    bound = float(np.sqrt(6.0 / (kh * kw * cin)))
    return rng.uniform(-bound, bound, size=(kh, kw, cin, cout)).astype(dtype)


def _xavier(rng, fan_in, fan_out, dtype):
    bound = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


class _Builder:
    def __init__(self, rng, dtype):
        self.rng = rng
        self.dtype = dtype
        self.params: Dict[str, Tensor] = {}

    def _add(self, name, arr):
        self.params[name] = Tensor(arr.astype(self.dtype), requires_grad=True, name=name)

    def conv(self, name, kh, kw, cin, cout):
        self._add(f"{name}.w", _kaiming_conv(self.rng, kh, kw, cin, cout, self.dtype))
        self._add(f"{name}.b", np.zeros(cout, dtype=self.dtype))

    def dense(self, name, fan_in, fan_out, zero_bias=True):
        self._add(f"{name}.w", _xavier(self.rng, fan_in, fan_out, self.dtype))
        self._add(f"{name}.b", np.zeros(fan_out, dtype=self.dtype))

    def norm(self, name, d):
        self._add(f"{name}.g", np.ones(d, dtype=self.dtype))
        self._add(f"{name}.b", np.zeros(d, dtype=self.dtype))

    def embed(self, name, shape):
        self._add(name, self.rng.normal(0.0, 0.02, size=shape).astype(self.dtype))

    def attention(self, name, d):
        for part in ("wq", "wk", "wv", "wo"):
            self.dense(f"{name}.{part}", d, d)

    def transformer_block(self, name, d, hidden):
        self.norm(f"{name}.ln1", d)
        self.attention(f"{name}.attn", d)
        self.norm(f"{name}.ln2", d)
        self.dense(f"{name}.mlp.fc1", d, hidden)
        self.dense(f"{name}.mlp.fc2", hidden, d)


def _build_decoder(b: _Builder, cfg: SrtConfig, prefix: str, out_width: int):
    d = cfg.token_width
    b.dense(f"{prefix}.query", cfg.query_width, d)
    for i in range(cfg.decoder_layers):
        b.transformer_block(f"{prefix}.l{i}", d, cfg.mlp_hidden)
    b.norm(f"{prefix}.ln_out", d)
    mlp_in = d + (4 if cfg.appearance else 0)
    b.dense(f"{prefix}.out.fc1", mlp_in, cfg.decoder_mlp_hidden)
    b.dense(f"{prefix}.out.fc2", cfg.decoder_mlp_hidden, out_width)


def init_params(cfg: SrtConfig, rng: np.random.Generator) -> Dict[str, Tensor]:
    """Fresh parameters for every group the config enables."""
    b = _Builder(rng, cfg.np_dtype)
    d = cfg.token_width

    cin = cfg.input_channels
    width = cfg.cnn_base
    for i in range(cfg.num_blocks):
        b.conv(f"cnn.block{i}.conv1", 3, 3, cin, width)
        b.conv(f"cnn.block{i}.conv2", 3, 3, width, width * 2)
        cin = width * 2
        width *= 2
    b.dense("cnn.proj", cin, d)
    b.embed("embed.pos", (cfg.grid_height, cfg.grid_width, d))
    b.embed("embed.cam0", (d,))
    b.embed("embed.rest", (d,))

    if cfg.encoder_on:
        for i in range(cfg.encoder_layers):
            b.transformer_block(f"enc.l{i}", d, cfg.mlp_hidden)
        b.norm("enc.ln_out", d)

    if cfg.set_latent:
        _build_decoder(b, cfg, "dec", cfg.output_channels)
    else:
        fan_in = d + cfg.query_width + (4 if cfg.appearance else 0)
        for i in range(cfg.flat_mlp_layers - 1):
            b.dense(f"flat.l{i}", fan_in, cfg.mlp_hidden)
            fan_in = cfg.mlp_hidden
        b.dense(f"flat.l{cfg.flat_mlp_layers - 1}", fan_in, cfg.output_channels)

    if cfg.appearance:
        cin = 3
        for i in range(4):
            b.conv(f"app.block{i}", 1, 1, cin, cfg.appearance_channels)
            cin = cfg.appearance_channels
        b.dense("app.out", cfg.appearance_channels, 4)

    if cfg.semantic_classes > 0:
        init_semantic_params(cfg, rng, into=b.params)
    return b.params


def init_semantic_params(cfg: SrtConfig, rng: np.random.Generator,
                         into: Dict[str, Tensor] | None = None) -> Dict[str, Tensor]:
    """Semantic decoder: same architecture as the color decoder, wider output."""
    if cfg.semantic_classes < 2:
        raise ModelError(f"semantic head needs >= 2 classes, got {cfg.semantic_classes}")
    b = _Builder(rng, cfg.np_dtype)
    lightfield_cfg = cfg if cfg.lightfield else cfg.with_overrides(lightfield=True)
    _build_decoder(b, lightfield_cfg.with_overrides(appearance=False), "sem",
                   cfg.semantic_classes)
    if into is not None:
        into.update(b.params)
        return into
    return b.params


def parameter_groups(params: Dict[str, Tensor]) -> Dict[str, list]:
    """Group names by top-level prefix (cnn, embed, enc, dec, flat, app, sem)."""
    groups: Dict[str, list] = {}
    for name in params:
        groups.setdefault(name.split(".", 1)[0], []).append(name)
    return groups


def params_checksum(params: Dict[str, Tensor], prefix: str = "") -> str:
    """sha256 over names + raw bytes; used to prove the encoder stays frozen."""
    h = hashlib.sha256()
    for name in sorted(params):
        if not name.startswith(prefix):
            continue
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name].data).tobytes())
    return h.hexdigest()


def save_model(path, cfg: SrtConfig, params: Dict[str, Tensor], extra: dict | None = None) -> None:
    meta = {"config": cfg.to_dict(), "fingerprint": cfg.fingerprint()}
    if extra:
        meta.update(extra)
    save_checkpoint(path, params, meta)


def load_model(path, expect: SrtConfig | None = None, force: bool = False,
               trainable: bool = False):
    """Returns (cfg, params, meta). Refuses a fingerprint mismatch unless forced."""
    meta, arrays = load_checkpoint(path)
    cfg = SrtConfig.from_dict(meta["config"])
    if expect is not None and expect.fingerprint() != cfg.fingerprint() and not force:
        raise CheckpointError(
            f"checkpoint config {cfg.fingerprint()} != runtime config {expect.fingerprint()}"
            " (pass force to override)")
    params = {name: Tensor(arr.astype(cfg.np_dtype), requires_grad=trainable, name=name)
              for name, arr in arrays.items()}
    return cfg, params, meta
