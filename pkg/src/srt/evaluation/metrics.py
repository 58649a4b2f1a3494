"""Image quality metrics: PSNR and SSIM on [0, 1] float images."""

from __future__ import annotations

import numpy as np

__all__ = ["psnr", "ssim", "PSNR_CAP_DB", "gaussian_window"]

PSNR_CAP_DB = 99.0
_K1, _K2 = 0.01, 0.03
_WINDOW = 11
_SIGMA = 1.5


def psnr(pred: np.ndarray, target: np.ndarray) -> float:
    """10*log10(1/MSE) for unit dynamic range; identical images cap at 99 dB."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"psnr: shape mismatch {pred.shape} vs {target.shape}")
    mse = float(np.mean((pred - target) ** 2))
    if mse <= 10 ** (-PSNR_CAP_DB / 10.0):
        return PSNR_CAP_DB
    return float(10.0 * np.log10(1.0 / mse))


def gaussian_window(size: int = _WINDOW, sigma: float = _SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-0.5 * (x / sigma) ** 2)
    g /= g.sum()
    return np.outer(g, g)


def _local_stats(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Windowed weighted means over all valid positions: (H-10, W-10)."""
    k = window.shape[0]
    win = np.lib.stride_tricks.sliding_window_view(img, (k, k))
    return np.einsum("ijkl,kl->ij", win, window)


def ssim(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean local SSIM, 11x11 Gaussian window sigma=1.5, k1=0.01, k2=0.03,
    dynamic range 1; per channel, averaged."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"ssim: shape mismatch {pred.shape} vs {target.shape}")
    if pred.ndim == 2:
        pred = pred[..., None]
        target = target[..., None]
    h, w = pred.shape[:2]
    if h < _WINDOW or w < _WINDOW:
        raise ValueError(f"ssim: image {h}x{w} smaller than the {_WINDOW}x{_WINDOW} window")
    c1 = _K1 ** 2
    c2 = _K2 ** 2
    win = gaussian_window()
    vals = []
    for ch in range(pred.shape[2]):
        x = pred[..., ch]
        y = target[..., ch]
        mx = _local_stats(x, win)
        my = _local_stats(y, win)
        mxx = _local_stats(x * x, win)
        myy = _local_stats(y * y, win)
        mxy = _local_stats(x * y, win)
        vx = mxx - mx * mx
        vy = myy - my * my
        cxy = mxy - mx * my
        num = (2 * mx * my + c1) * (2 * cxy + c2)
        den = (mx * mx + my * my + c1) * (vx + vy + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))
