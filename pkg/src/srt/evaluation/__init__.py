"""Metrics, timing benchmarks, robustness sweeps, and inspection tools."""

from .metrics import psnr, ssim, PSNR_CAP_DB, gaussian_window
from .harness import (EvalReport, mean_color_oracle, evaluate_scene,
                      evaluate_model, render_panel)
from .benchmark import BenchmarkResult, orbit_path, benchmark
from .epi import (lateral_path, orbit_arc, build_epi, row_shift_estimates,
                  shift_correlation, orientation_estimates, orientation_correlation)
from .attention_export import attention_maps, export_attention
from .noise import noise_sweep, train_and_evaluate

__all__ = [
    "psnr", "ssim", "PSNR_CAP_DB", "gaussian_window",
    "EvalReport", "mean_color_oracle", "evaluate_scene", "evaluate_model", "render_panel",
    "BenchmarkResult", "orbit_path", "benchmark",
    "lateral_path", "orbit_arc", "build_epi", "row_shift_estimates",
    "shift_correlation", "orientation_estimates", "orientation_correlation",
    "attention_maps", "export_attention",
    "noise_sweep", "train_and_evaluate",
]
