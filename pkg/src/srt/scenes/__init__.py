"""Procedural multi-view scenes, the reference ray tracer, and dataset IO."""

from .procedural import (SceneObject, SceneSpec, SceneConfig, generate_scene,
                         render_reference, LIGHT_DIR, AMBIENT, BACKGROUND_CLASS)
from .dataset import (View, SceneSample, DatasetError, TEST_SEED_OFFSET,
                      generate_samples, write_dataset, read_dataset, read_meta,
                      read_scene, generate_dataset)

__all__ = [
    "SceneObject", "SceneSpec", "SceneConfig", "generate_scene", "render_reference",
    "LIGHT_DIR", "AMBIENT", "BACKGROUND_CLASS",
    "View", "SceneSample", "DatasetError", "TEST_SEED_OFFSET",
    "generate_samples", "write_dataset", "read_dataset", "read_meta",
    "read_scene", "generate_dataset",
]
