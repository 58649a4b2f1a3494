"""Open the model up: where does the decoder look when rendering a ray, and
do epipolar images stay consistent over a camera sweep?

Uses the checkpoint written by demo 03 (run that first, or pass a path).

Run:  python demos/04_inspect_attention_epi.py [checkpoint]
"""

import sys
from pathlib import Path

import numpy as np
from PIL import Image

from srt.model import SceneModel
from srt.scenes import SceneConfig, generate_samples, generate_scene, render_reference
from srt.evaluation import (export_attention, orbit_arc, build_epi,
                            orientation_estimates)

here = Path(__file__).parent
ckpt = Path(sys.argv[1]) if len(sys.argv) > 1 else here / "out" / "overfit" / "model.srt"
if not ckpt.exists():
    sys.exit(f"no checkpoint at {ckpt}; run demos/03_overfit_one_scene.py first")
out = here / "out" / "inspect"
out.mkdir(parents=True, exist_ok=True)

scfg = SceneConfig()
scene = generate_samples(0, 1, scfg)[0]
model = SceneModel.from_checkpoint(ckpt)

# attention: encoder self-attention for one patch, decoder cross-attention
# for one rendered ray, head-averaged, one PNG per layer
maps = export_attention(model, scene, out, query_pixel=(24, 24))
for name, layers in maps.items():
    for k, grid in enumerate(layers):
        focus = np.unravel_index(np.argmax(grid), grid.shape)
        print(f"{name} layer {k}: strongest key = view {focus[0]} patch {focus[1:]} "
              f"(weight {grid.max():.3f})")

# epipolar image over an orbit arc, model vs reference tracer
spec = generate_scene(np.random.default_rng(0), scfg)
base = scene.target_views[0]
arc = orbit_arc(base.pose.translation, degrees=12, frames=24)
imgs = np.stack([v.image for v in scene.input_views])
latent = model.encode_scene(imgs, [v.pose for v in scene.input_views],
                            [v.intrinsics for v in scene.input_views])
row = 24
epi_model = build_epi(lambda p: model.render_image(latent, p, base.intrinsics, 48, 48)[0],
                      arc, row)
epi_ref = build_epi(lambda p: render_reference(spec, p, base.intrinsics, 48, 48)[0],
                    arc, row)
stack = np.concatenate([epi_ref, np.ones((2, 48, 3)), epi_model], axis=0)
Image.fromarray((np.clip(stack, 0, 1) * 255).astype(np.uint8)).resize((48 * 6, stack.shape[0] * 6),
                                                                      Image.NEAREST).save(out / "epi.png")
shift_m, _, _ = orientation_estimates(epi_model)
shift_r, energy, coher = orientation_estimates(epi_ref)
mask = (energy > np.quantile(energy, 0.7)) & (coher > 0.5)
corr = np.corrcoef(shift_m[mask], shift_r[mask])[0, 1]
print(f"EPI orientation correlation vs reference tracer: {corr:.3f}")
print(f"outputs in {out}")
