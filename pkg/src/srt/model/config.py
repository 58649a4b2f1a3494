"""Architecture configuration: every structural knob and variant flag.

Parameter shapes are derivable from a config alone, so checkpoints embed the
config and refuse to load into a mismatched runtime unless forced.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict, replace

import numpy as np

from ..geometry import PosencConfig

__all__ = ["SrtConfig", "ConfigError", "desk_config", "paper_config"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SrtConfig:
    # input geometry
    image_height: int = 48
    image_width: int = 48
    patch_factor: int = 8            # CNN downscale K; one block per factor of 2
    octaves_origin: int = 8
    octaves_direction: int = 8
    # backbone / transformer widths
    cnn_base: int = 32               # first conv width; doubles per strided conv
    token_width: int = 192
    encoder_layers: int = 4
    decoder_layers: int = 2
    heads: int = 6
    head_width: int = 32
    mlp_hidden: int = 384
    decoder_mlp_hidden: int = 128
    flat_mlp_layers: int = 8
    # variant flags
    posed: bool = True
    lightfield: bool = True          # False -> volumetric sampling + compositing
    encoder_on: bool = True          # False -> decoder attends into CNN tokens
    set_latent: bool = True          # False -> mean token + deep MLP, no decoder attention
    appearance: bool = False
    appearance_channels: int = 32
    semantic_classes: int = 0        # 0 -> no semantic head
    # volumetric sampling
    samples_per_ray: int = 24
    near: float = 0.125
    far: float = 0.7
    # numeric precision for parameters/activations
    dtype: str = "float32"

    def __post_init__(self):
        if self.token_width != self.heads * self.head_width:
            raise ConfigError(
                f"token_width {self.token_width} != heads*head_width {self.heads * self.head_width}")
        if self.image_height % self.patch_factor or self.image_width % self.patch_factor:
            raise ConfigError(
                f"patch factor {self.patch_factor} must divide image size "
                f"{self.image_height}x{self.image_width}")
        k = self.patch_factor
        if k < 1 or (k & (k - 1)):
            raise ConfigError(f"patch factor must be a power of two, got {k}")
        if self.decoder_layers < 1:
            raise ConfigError("decoder_layers must be >= 1")
        if not self.lightfield and not (self.near < self.far):
            raise ConfigError(f"volumetric bounds need near < far, got [{self.near}, {self.far}]")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"unsupported dtype {self.dtype}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    @property
    def posenc(self) -> PosencConfig:
        return PosencConfig(self.octaves_origin, self.octaves_direction)

    @property
    def num_blocks(self) -> int:
        return int(np.log2(self.patch_factor))

    @property
    def grid_height(self) -> int:
        return self.image_height // self.patch_factor

    @property
    def grid_width(self) -> int:
        return self.image_width // self.patch_factor

    @property
    def input_channels(self) -> int:
        # RGB plus the ray encoding when poses are available
        if not self.posed:
            return 3
        return 3 + 6 * self.octaves_origin + 6 * self.octaves_direction

    @property
    def query_width(self) -> int:
        # light-field queries encode (origin, direction); volumetric ones a 3D point
        if self.lightfield:
            return 6 * self.octaves_origin + 6 * self.octaves_direction
        return 6 * self.octaves_origin

    @property
    def output_channels(self) -> int:
        return 3 if self.lightfield else 4   # volumetric adds a density channel

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "SrtConfig":
        return SrtConfig(**d)

    def with_overrides(self, **kw) -> "SrtConfig":
        return replace(self, **kw)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def desk_config(**overrides) -> SrtConfig:
    """CPU-budget default: every structural element at reduced width."""
    return SrtConfig(**overrides)


def paper_config(**overrides) -> SrtConfig:
    """Full-scale reference hyperparameters (not trainable on a desk CPU)."""
    base = dict(
        image_height=128, image_width=128, patch_factor=16,
        octaves_origin=15, octaves_direction=15,
        cnn_base=96, token_width=768, encoder_layers=12, decoder_layers=2,
        heads=12, head_width=64, mlp_hidden=1536, decoder_mlp_hidden=128,
        samples_per_ray=192,
    )
    base.update(overrides)
    return SrtConfig(**base)
