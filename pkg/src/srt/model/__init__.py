"""The network: backbone CNN, set-latent encoder, ray decoders, variants."""

from .config import SrtConfig, ConfigError, desk_config, paper_config
from .params import (init_params, init_semantic_params, params_checksum,
                     save_model, load_model, parameter_groups, ModelError)
from .network import (SetLatent, AttentionRecord, build_input_features,
                      cnn_backbone, encode, decode_rays, decode_volumetric,
                      composite, render_query, appearance_embed, semantic_decode,
                      encode_call_count, reset_encode_counter)
from .api import SceneModel

__all__ = [
    "SrtConfig", "ConfigError", "desk_config", "paper_config",
    "init_params", "init_semantic_params", "params_checksum",
    "save_model", "load_model", "parameter_groups", "ModelError",
    "SetLatent", "AttentionRecord", "build_input_features", "cnn_backbone",
    "encode", "decode_rays", "decode_volumetric", "composite", "render_query",
    "appearance_embed", "semantic_decode", "encode_call_count", "reset_encode_counter",
    "SceneModel",
]
