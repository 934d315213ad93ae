"""Wavelet-domain CT denoising toolkit.

Thin re-export layer over the compiled extension. Arrays are 2D float64
numpy arrays in HU unless a function says otherwise.
"""

from ._core import (
    Denoiser,
    denoise,
    evaluate,
    high_freq,
    load_slice,
    low_freq,
    metric_distance,
    metric_loss,
    normalize_rows,
    patch_stats,
    psnr,
    resolve_config_json,
    sample_anchor_locations,
    save_slice,
    ssim,
    synth,
    train,
)

__all__ = [
    "Denoiser",
    "denoise",
    "evaluate",
    "high_freq",
    "load_slice",
    "low_freq",
    "metric_distance",
    "metric_loss",
    "normalize_rows",
    "patch_stats",
    "psnr",
    "resolve_config_json",
    "sample_anchor_locations",
    "save_slice",
    "ssim",
    "synth",
    "train",
]
