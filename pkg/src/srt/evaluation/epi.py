"""Epipolar-image (EPI) construction and line-slope diagnostics.

A dolly path moves the camera smoothly (laterally, or along an arc that
keeps the scene centered). Stacking one fixed pixel row from every frame
produces an EPI whose line slopes encode how fast each surface moves across
the image, which for translation is depth. Comparing the model's EPI slopes
against the reference tracer's is a temporal-consistency check that needs no
learned machinery.

Two slope estimators:
  - `row_shift_estimates`: windowed ZNCC between consecutive rows, integer
    search with parabolic sub-pixel refinement. Transparent, but sensitive
    to blur.
  - `orientation_estimates`: structure-tensor orientation (per-pixel shift
    per frame with an energy/coherence confidence mask). Integrates over a
    2-D neighborhood, so it tolerates the blur a learned model produces;
    use frame spacing that keeps shifts below about a pixel per frame.
"""

from __future__ import annotations

from typing import Callable, List, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from ..geometry import RigidPose, Intrinsics, look_at

__all__ = ["lateral_path", "orbit_arc", "build_epi", "row_shift_estimates",
           "shift_correlation", "orientation_estimates", "orientation_correlation"]


def lateral_path(base: RigidPose, extent: float, frames: int) -> List[RigidPose]:
    """Poses translated along the camera's x axis over [-extent/2, +extent/2]."""
    if frames < 2:
        raise ValueError("a dolly path needs at least 2 frames")
    x_axis = base.rotation[:, 0]
    offsets = np.linspace(-0.5, 0.5, frames) * extent
    return [RigidPose(base.rotation, base.translation + o * x_axis) for o in offsets]


def orbit_arc(center: np.ndarray, degrees: float, frames: int,
              target=(0.0, 0.0, 0.0)) -> List[RigidPose]:
    """Camera positions swept around the z axis by `degrees`, re-aimed at
    `target` each frame; stays on the same camera shell the scene's views
    were sampled from."""
    if frames < 2:
        raise ValueError("a dolly path needs at least 2 frames")
    out = []
    for a in np.linspace(-degrees / 2.0, degrees / 2.0, frames):
        th = np.deg2rad(a)
        rot = np.array([[np.cos(th), -np.sin(th), 0.0],
                        [np.sin(th), np.cos(th), 0.0],
                        [0.0, 0.0, 1.0]])
        out.append(look_at(rot @ np.asarray(center, dtype=np.float64),
                           np.asarray(target, dtype=np.float64)))
    return out


def build_epi(render_frame: Callable[[RigidPose], np.ndarray],
              poses: List[RigidPose], row: int) -> np.ndarray:
    """Render the pose sequence and stack the fixed pixel row vertically.

    Returns (frames, width, channels). render_frame must return (H, W, 3).
    """
    if len(poses) < 2:
        raise ValueError("EPI needs at least 2 frames")
    rows = []
    for pose in poses:
        frame = render_frame(pose)
        if not (0 <= row < frame.shape[0]):
            raise IndexError(f"row {row} outside image height {frame.shape[0]}")
        rows.append(frame[row])
    return np.stack(rows)


def _zncc_shift(a: np.ndarray, b: np.ndarray, max_shift: int) -> float:
    """Sub-pixel shift of b relative to a maximizing normalized correlation."""
    scores = np.full(2 * max_shift + 1, -np.inf)
    n = len(a)
    for k, s in enumerate(range(-max_shift, max_shift + 1)):
        lo_a, hi_a = max(0, s), min(n, n + s)
        seg_a = a[lo_a:hi_a]
        seg_b = b[lo_a - s:hi_a - s]
        sa = seg_a - seg_a.mean()
        sb = seg_b - seg_b.mean()
        denom = np.sqrt((sa * sa).sum() * (sb * sb).sum())
        if denom > 1e-12:
            scores[k] = float((sa * sb).sum() / denom)
    k = int(np.argmax(scores))
    best = k - max_shift
    if 0 < k < len(scores) - 1 and np.isfinite(scores[k - 1]) and np.isfinite(scores[k + 1]):
        denom = scores[k - 1] - 2 * scores[k] + scores[k + 1]
        if abs(denom) > 1e-12:
            best += 0.5 * (scores[k - 1] - scores[k + 1]) / denom
    return float(best)


def row_shift_estimates(epi: np.ndarray, window: int = 16, step: int = 8,
                        max_shift: int = 6,
                        texture_ref: np.ndarray | None = None,
                        texture_thresh: float = 0.01) -> np.ndarray:
    """Per-(frame pair, window) horizontal shifts; NaN where the reference
    window lacks texture. epi: (frames, width[, 3])."""
    gray = epi.mean(axis=-1) if epi.ndim == 3 else epi
    ref = texture_ref.mean(axis=-1) if (texture_ref is not None and texture_ref.ndim == 3) \
        else (texture_ref if texture_ref is not None else gray)
    frames, width = gray.shape
    starts = list(range(0, width - window + 1, step))
    out = np.full((frames - 1, len(starts)), np.nan)
    for i in range(frames - 1):
        for j, s in enumerate(starts):
            ref_win = ref[i, s:s + window]
            if ref_win.std() < texture_thresh:
                continue
            out[i, j] = _zncc_shift(gray[i, s:s + window], gray[i + 1, s:s + window],
                                    max_shift)
    return out


def shift_correlation(shifts_a: np.ndarray, shifts_b: np.ndarray) -> float:
    """Pearson correlation over entries finite in both estimate grids."""
    m = np.isfinite(shifts_a) & np.isfinite(shifts_b)
    if m.sum() < 8:
        raise ValueError(f"too few valid shift estimates ({int(m.sum())}) to correlate")
    a = shifts_a[m]
    b = shifts_b[m]
    if a.std() < 1e-9 or b.std() < 1e-9:
        raise ValueError("shift estimates are constant; correlation undefined")
    return float(np.corrcoef(a, b)[0, 1])


def orientation_estimates(epi: np.ndarray, smooth: float = 1.2,
                          integrate: float = 2.0):
    """Structure-tensor line orientation per EPI pixel.

    Returns (shift, energy, coherence): shift is pixels of horizontal motion
    per frame (valid while lines move less than ~1 px/frame), energy the
    horizontal gradient power (texture), coherence in [0, 1] how line-like
    the local neighborhood is.
    """
    gray = gaussian_filter(epi.mean(axis=-1) if epi.ndim == 3 else epi, smooth)
    d_frame, d_x = np.gradient(gray)
    jxx = gaussian_filter(d_x * d_x, integrate)
    jxt = gaussian_filter(d_x * d_frame, integrate)
    jtt = gaussian_filter(d_frame * d_frame, integrate)
    shift = -jxt / (jxx + 1e-12)
    energy = jxx
    coherence = np.sqrt((jxx - jtt) ** 2 + 4 * jxt ** 2) / (jxx + jtt + 1e-12)
    return shift, energy, coherence


def orientation_correlation(epi_model: np.ndarray, epi_reference: np.ndarray,
                            energy_quantile: float = 0.7,
                            min_coherence: float = 0.5) -> float:
    """Pearson correlation of line orientations at the reference EPI's
    confident pixels (textured and line-like, borders excluded)."""
    if epi_model.shape[:2] != epi_reference.shape[:2]:
        raise ValueError(f"EPI shapes differ: {epi_model.shape} vs {epi_reference.shape}")
    dm, _, _ = orientation_estimates(epi_model)
    dr, energy, coherence = orientation_estimates(epi_reference)
    mask = (energy > np.quantile(energy, energy_quantile)) & (coherence > min_coherence)
    mask[:2] = False
    mask[-2:] = False
    if mask.sum() < 16:
        raise ValueError(f"too few confident EPI pixels ({int(mask.sum())})")
    return float(np.corrcoef(dm[mask], dr[mask])[0, 1])
