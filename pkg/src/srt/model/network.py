"""Forward passes: input featurization, backbone CNN, set-latent encoder,
ray/point decoders, and the paper-variant heads.

Everything is functional over a parameter dict so the same code serves
float32 training, float64 gradient checks, and frozen-parameter inference.
Ray canonicalization happens in float64 (see geometry) before features are
cast to the model dtype.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .. import tensor as T
from ..tensor import Tensor
from ..geometry import RigidPose, Intrinsics, generate_rays, to_canonical, posenc, posenc_ray
from .config import SrtConfig
from .params import ModelError

__all__ = [
    "SetLatent", "AttentionRecord",
    "build_input_features", "cnn_backbone", "encode",
    "decode_rays", "decode_volumetric", "composite", "render_query",
    "appearance_embed", "semantic_decode",
    "encode_call_count", "reset_encode_counter",
]

# incremented on every encoder invocation; benchmarks assert encode-once
_ENCODE_CALLS = 0


def encode_call_count() -> int:
    return _ENCODE_CALLS


def reset_encode_counter() -> None:
    global _ENCODE_CALLS
    _ENCODE_CALLS = 0


@dataclass
class AttentionRecord:
    """Per-layer, per-head attention weights captured during a forward pass."""

    entries: List[tuple] = field(default_factory=list)   # (name, layer, (H, Q, K) array)

    def add(self, name: str, layer: int, weights: np.ndarray) -> None:
        self.entries.append((name, layer, weights))

    def by_name(self, name: str) -> List[np.ndarray]:
        return [w for n, _, w in sorted(
            (e for e in self.entries if e[0] == name), key=lambda e: e[1])]


@dataclass
class SetLatent:
    """The scene representation: one token per input patch.

    provenance maps each token to (view index, patch row, patch col); it is
    for visualization only and does not influence decoding.
    """

    tokens: Tensor                      # (I*h*w, token_width)
    provenance: np.ndarray              # (I*h*w, 3) int
    canonical_pose: RigidPose
    world_scale: float

    @property
    def cardinality(self) -> int:
        return self.tokens.shape[0]


def _p(params: Dict[str, Tensor], name: str) -> Tensor:
    try:
        return params[name]
    except KeyError:
        raise ModelError(f"missing parameter {name!r}; wrong variant flags for this checkpoint?") from None


def _linear(params, prefix, x: Tensor) -> Tensor:
    return T.linear(x, _p(params, f"{prefix}.w"), _p(params, f"{prefix}.b"))


def _norm(params, prefix, x: Tensor) -> Tensor:
    return T.layer_norm(x, _p(params, f"{prefix}.g"), _p(params, f"{prefix}.b"))


def _split_heads(x: Tensor, heads: int, head_width: int) -> Tensor:
    n = x.shape[0]
    return T.transpose(T.reshape(x, (n, heads, head_width)), (1, 0, 2))


def _attention(params, prefix, q_tokens: Tensor, kv_tokens: Tensor, cfg: SrtConfig,
               recorder: Optional[AttentionRecord], rec_name: str, layer: int) -> Tensor:
    h, hw = cfg.heads, cfg.head_width
    q = _split_heads(_linear(params, f"{prefix}.wq", q_tokens), h, hw)
    k = _split_heads(_linear(params, f"{prefix}.wk", kv_tokens), h, hw)
    v = _split_heads(_linear(params, f"{prefix}.wv", kv_tokens), h, hw)
    scores = T.matmul(q, T.transpose(k, (0, 2, 1))) * (1.0 / np.sqrt(hw))
    weights = T.softmax(scores)                       # (heads, Q, K)
    if recorder is not None:
        recorder.add(rec_name, layer, weights.data.copy())
    ctx = T.matmul(weights, v)                        # (heads, Q, hw)
    merged = T.reshape(T.transpose(ctx, (1, 0, 2)), (q_tokens.shape[0], cfg.token_width))
    return _linear(params, f"{prefix}.wo", merged)


def _mlp(params, prefix, x: Tensor) -> Tensor:
    return _linear(params, f"{prefix}.fc2", T.gelu(_linear(params, f"{prefix}.fc1", x)))


def _encoder_block(params, prefix, x: Tensor, cfg, recorder, rec_name, layer) -> Tensor:
    normed = _norm(params, f"{prefix}.ln1", x)
    a = _attention(params, f"{prefix}.attn", normed, normed, cfg, recorder, rec_name, layer)
    x = T.add(x, a)
    return T.add(x, _mlp(params, f"{prefix}.mlp", _norm(params, f"{prefix}.ln2", x)))


def _decoder_block(params, prefix, q: Tensor, memory: Tensor, cfg,
                   recorder, rec_name, layer) -> Tensor:
    a = _attention(params, f"{prefix}.attn", _norm(params, f"{prefix}.ln1", q),
                   memory, cfg, recorder, rec_name, layer)
    q = T.add(q, a)
    return T.add(q, _mlp(params, f"{prefix}.mlp", _norm(params, f"{prefix}.ln2", q)))


# ---------------------------------------------------------------------------
# input featurization + backbone
# ---------------------------------------------------------------------------

def build_input_features(images: np.ndarray, poses: Optional[List[RigidPose]],
                         intrinsics: Optional[List[Intrinsics]], cfg: SrtConfig,
                         world_scale: float = 1.0) -> np.ndarray:
    """Per-view pixel features: RGB, plus the canonical-frame ray encoding
    when poses are used. Returns (I, H, W, c) in the model dtype.

    View 0 is the canonical view; for the unposed variant the encodings are
    dropped entirely (c = 3).
    """
    images = np.asarray(images)
    if images.ndim != 4 or images.shape[-1] != 3:
        raise ModelError(f"expected (I, H, W, 3) images, got {images.shape}")
    i_views, h, w = images.shape[:3]
    if (h, w) != (cfg.image_height, cfg.image_width):
        raise ModelError(f"images {h}x{w} do not match config "
                         f"{cfg.image_height}x{cfg.image_width}")
    if not cfg.posed:
        return images.astype(cfg.np_dtype)
    if poses is None or intrinsics is None or len(poses) != i_views:
        raise ModelError("posed variant needs one pose+intrinsics per view")
    c0 = poses[0]
    feats = np.empty((i_views, h, w, cfg.input_channels), dtype=cfg.np_dtype)
    no6 = 6 * cfg.octaves_origin
    for i in range(i_views):
        o, d = generate_rays(poses[i], intrinsics[i], w, h)
        o, d = to_canonical(o, d, c0)
        feats[i, :, :, :3] = images[i]
        # every pixel of a view shares the camera center, so encode it once
        enc_o = posenc((o[0, 0] * world_scale).astype(cfg.np_dtype), cfg.octaves_origin)
        feats[i, :, :, 3:3 + no6] = enc_o
        feats[i, :, :, 3 + no6:] = posenc(d.astype(cfg.np_dtype), cfg.octaves_direction)
    return feats


def cnn_backbone(features: np.ndarray, params: Dict[str, Tensor], cfg: SrtConfig):
    """Patch tokens from pixel features.

    Per block: stride-1 conv, ReLU, stride-2 conv, ReLU, doubling channels;
    then a 1x1 projection to the token width. The shared position table is
    added to every view's grid and the camera-id vector distinguishes the
    canonical view from the rest. Returns (tokens (I*h*w, d), provenance).
    """
    i_views, h, w = features.shape[:3]
    if h % cfg.patch_factor or w % cfg.patch_factor:
        raise ModelError(f"spatial size {h}x{w} not divisible by patch factor {cfg.patch_factor}")
    x = Tensor(features.astype(cfg.np_dtype))
    for i in range(cfg.num_blocks):
        x = T.relu(T.conv2d(x, _p(params, f"cnn.block{i}.conv1.w"),
                            _p(params, f"cnn.block{i}.conv1.b"), stride=1))
        x = T.relu(T.conv2d(x, _p(params, f"cnn.block{i}.conv2.w"),
                            _p(params, f"cnn.block{i}.conv2.b"), stride=2))
    gh, gw = cfg.grid_height, cfg.grid_width
    tokens = _linear(params, "cnn.proj", T.reshape(x, (i_views * gh * gw, x.shape[-1])))
    d = cfg.token_width
    pos = T.reshape(_p(params, "embed.pos"), (1, gh * gw, d))
    pos = T.reshape(T.expand(pos, (i_views, gh * gw, d)), (i_views * gh * gw, d))
    tokens = T.add(tokens, pos)
    cam0 = T.expand(T.reshape(_p(params, "embed.cam0"), (1, d)), (gh * gw, d))
    if i_views > 1:
        rest = T.expand(T.reshape(_p(params, "embed.rest"), (1, d)),
                        ((i_views - 1) * gh * gw, d))
        cam = T.concat([cam0, rest], axis=0)
    else:
        cam = cam0
    tokens = T.add(tokens, cam)
    prov = np.stack(np.meshgrid(np.arange(i_views), np.arange(gh), np.arange(gw),
                                indexing="ij"), axis=-1).reshape(-1, 3)
    return tokens, prov


def encode(images: np.ndarray, poses: Optional[List[RigidPose]],
           intrinsics: Optional[List[Intrinsics]], params: Dict[str, Tensor],
           cfg: SrtConfig, world_scale: float = 1.0,
           recorder: Optional[AttentionRecord] = None) -> SetLatent:
    """Images (+ optional cameras) -> set-latent scene representation.

    Token count is I*h*w: the encoder transformer is cardinality-preserving,
    and with the encoder ablated the CNN tokens pass through directly.
    """
    global _ENCODE_CALLS
    _ENCODE_CALLS += 1
    images = np.asarray(images)
    if images.ndim != 4 or images.shape[0] < 1:
        raise ModelError("encode needs at least one input view")
    feats = build_input_features(images, poses, intrinsics, cfg, world_scale)
    tokens, prov = cnn_backbone(feats, params, cfg)
    if cfg.encoder_on:
        for i in range(cfg.encoder_layers):
            tokens = _encoder_block(params, f"enc.l{i}", tokens, cfg, recorder, "enc", i)
        tokens = _norm(params, "enc.ln_out", tokens)
    canonical = poses[0] if poses else RigidPose.identity()
    return SetLatent(tokens=tokens, provenance=prov, canonical_pose=canonical,
                     world_scale=world_scale)


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------

def _decode_transformer(latent: SetLatent, query: np.ndarray, params, cfg: SrtConfig,
                        prefix: str, appearance: Optional[Tensor],
                        recorder: Optional[AttentionRecord]) -> Tensor:
    if latent.cardinality == 0:
        raise ModelError("cannot decode against an empty latent")
    q = _linear(params, f"{prefix}.query", Tensor(query.astype(cfg.np_dtype)))
    for i in range(cfg.decoder_layers):
        q = _decoder_block(params, f"{prefix}.l{i}", q, latent.tokens, cfg,
                           recorder, prefix, i)
    h = _norm(params, f"{prefix}.ln_out", q)
    if appearance is not None:
        app = T.expand(T.reshape(appearance, (1, 4)), (h.shape[0], 4))
        h = T.concat([h, app], axis=-1)
    h = T.gelu(_linear(params, f"{prefix}.out.fc1", h))
    return _linear(params, f"{prefix}.out.fc2", h)


def _decode_flat(latent: SetLatent, query: np.ndarray, params, cfg: SrtConfig,
                 appearance: Optional[Tensor]) -> Tensor:
    if latent.cardinality == 0:
        raise ModelError("cannot decode against an empty latent")
    n = query.shape[0]
    d = cfg.token_width
    mean_tok = T.reshape(T.tmean(latent.tokens, axis=0), (1, d))
    parts = [T.expand(mean_tok, (n, d)), Tensor(query.astype(cfg.np_dtype))]
    if appearance is not None:
        parts.append(T.expand(T.reshape(appearance, (1, 4)), (n, 4)))
    h = T.concat(parts, axis=-1)
    for i in range(cfg.flat_mlp_layers - 1):
        h = T.gelu(_linear(params, f"flat.l{i}", h))
    return _linear(params, f"flat.l{cfg.flat_mlp_layers - 1}", h)


def decode_rays(latent: SetLatent, origins: np.ndarray, directions: np.ndarray,
                params, cfg: SrtConfig, appearance: Optional[Tensor] = None,
                recorder: Optional[AttentionRecord] = None) -> Tensor:
    """Light-field decode: canonical, world_scale-normalized rays -> RGB in (0,1)."""
    query = posenc_ray(origins.astype(cfg.np_dtype), directions.astype(cfg.np_dtype),
                       cfg.posenc)
    if cfg.set_latent:
        raw = _decode_transformer(latent, query, params, cfg, "dec", appearance, recorder)
    else:
        raw = _decode_flat(latent, query, params, cfg, appearance)
    return T.sigmoid(raw)


def composite(sigma: Tensor, rgb: Tensor, deltas: np.ndarray):
    """Front-to-back alpha compositing along each ray.

    sigma (R, S) nonnegative densities, rgb (R, S, 3), deltas (R, S) segment
    lengths. Returns (color (R, 3), weights (R, S), opacity (R,)) where
    weights[i] = T_i * alpha_i, alpha_i = 1 - exp(-sigma_i * delta_i) and
    T_i = prod_{j<i} (1 - alpha_j).
    """
    r, s = sigma.shape
    sd = T.mul(sigma, Tensor(deltas.astype(sigma.data.dtype)))
    alpha = 1.0 - T.exp(T.neg(sd))
    # exclusive prefix sums via a constant strictly-upper-triangular matmul
    upper = Tensor(np.triu(np.ones((s, s)), 1).astype(sigma.data.dtype))
    trans = T.exp(T.neg(T.matmul(sd, upper)))
    weights = T.mul(trans, alpha)                              # (R, S)
    wexp = T.expand(T.reshape(weights, (r, s, 1)), (r, s, 3))
    color = T.tsum(T.mul(wexp, rgb), axis=1)
    opacity = T.tsum(weights, axis=1)
    return color, weights, opacity


def decode_volumetric(latent: SetLatent, origins: np.ndarray, directions: np.ndarray,
                      params, cfg: SrtConfig, rng: Optional[np.random.Generator] = None,
                      appearance: Optional[Tensor] = None,
                      recorder: Optional[AttentionRecord] = None):
    """Volumetric decode: sample 3D points along each ray, query the decoder
    with encoded points (no view directions), and composite.

    Returns (color Tensor (R, 3), depth ndarray (R,)). Depth is the
    opacity-weighted expected distance; rays with total opacity < 1e-6
    report the far bound.
    """
    if not (cfg.near < cfg.far):
        raise ModelError(f"volumetric bounds need near < far, got [{cfg.near}, {cfg.far}]")
    r = origins.shape[0]
    s = cfg.samples_per_ray
    width = (cfg.far - cfg.near) / s
    offsets = rng.uniform(size=(r, s)) if rng is not None else np.full((r, s), 0.5)
    ts = cfg.near + (np.arange(s) + offsets) * width           # (R, S), stratified
    pts = origins[:, None, :] + ts[..., None] * directions[:, None, :]
    query = posenc(pts.reshape(r * s, 3).astype(cfg.np_dtype), cfg.octaves_origin)
    if cfg.set_latent:
        raw = _decode_transformer(latent, query, params, cfg, "dec", appearance, recorder)
    else:
        raw = _decode_flat(latent, query, params, cfg, appearance)
    sigma = T.reshape(T.softplus(raw[:, :1]), (r, s))
    rgb = T.reshape(T.sigmoid(raw[:, 1:]), (r, s, 3))
    deltas = np.diff(ts, axis=1, append=cfg.far)
    color, weights, opacity = composite(sigma, rgb, deltas)
    w = weights.data
    total = opacity.data
    with np.errstate(invalid="ignore", divide="ignore"):
        depth = np.where(total < 1e-6, cfg.far, (w * ts).sum(axis=1) / np.maximum(total, 1e-12))
    return color, depth


def render_query(latent: SetLatent, origins: np.ndarray, directions: np.ndarray,
                 params, cfg: SrtConfig, rng=None, appearance=None, recorder=None):
    """Variant dispatch: returns (color Tensor (R,3), depth or None)."""
    if cfg.lightfield:
        return decode_rays(latent, origins, directions, params, cfg,
                           appearance=appearance, recorder=recorder), None
    return decode_volumetric(latent, origins, directions, params, cfg, rng=rng,
                             appearance=appearance, recorder=recorder)


def appearance_embed(image: np.ndarray, params, cfg: SrtConfig) -> Tensor:
    """Exposure/white-balance summary of one view: 4 blocks of 2x2 mean
    pooling + 1x1 conv + ReLU, then a spatial mean mapped to 4 channels."""
    h, w, _ = image.shape
    x = Tensor(np.asarray(image, dtype=cfg.np_dtype))
    cin = 3
    for i in range(4):
        if h % 2 or w % 2:
            raise ModelError(f"appearance encoder needs /16 divisible images, got {image.shape}")
        x = T.tmean(T.reshape(x, (h // 2, 2, w // 2, 2, cin)), axis=(1, 3))
        h, w = h // 2, w // 2
        wmat = T.reshape(_p(params, f"app.block{i}.w"), (cin, cfg.appearance_channels))
        x = T.relu(T.linear(T.reshape(x, (h * w, cin)), wmat, _p(params, f"app.block{i}.b")))
        cin = cfg.appearance_channels
        x = T.reshape(x, (h, w, cin))
    pooled = T.reshape(T.tmean(x, axis=(0, 1)), (1, cin))
    return T.reshape(_linear(params, "app.out", pooled), (4,))


def semantic_decode(latent: SetLatent, origins: np.ndarray, directions: np.ndarray,
                    params, cfg: SrtConfig,
                    recorder: Optional[AttentionRecord] = None) -> Tensor:
    """Class logits per ray from the semantic decoder head (softmax lives in
    the loss / evaluation, not here)."""
    if cfg.semantic_classes < 2:
        raise ModelError("semantic head is not configured")
    query = posenc_ray(origins.astype(cfg.np_dtype), directions.astype(cfg.np_dtype),
                       cfg.posenc)
    return _decode_transformer(latent, query, params, cfg, "sem", None, recorder)
