"""Set-latent scene encoding and per-ray novel-view rendering, on a small
self-contained autodiff engine.

Subpackages:
  tensor     autodiff primitives, Adam optimizer, checkpoint container
  geometry   cameras, rays, rigid transforms, ray positional encoding
  scenes     procedural multi-view datasets + reference ray tracer
  model      backbone CNN, set-latent encoder, ray-query decoders, variants
  training   loss, ray sampling, schedules, end-to-end optimization
  evaluation PSNR/SSIM, benchmarks, noise sweeps, epipolar-image tools
  service    HTTP render service (encode once, render many)
  cli        command-line entry points
"""

__version__ = "0.1.0"
