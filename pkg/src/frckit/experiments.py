"""Experiment drivers: loss-sensitivity sweep, averaging bias, spectral bias.

These functions orchestrate the lower-level modules into the analyses the
CLI exposes; each returns plain data that serializes to CSV.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .corrupt import CorruptionSpec, corrupt
from .denoise import DenoiserModel, TrainConfig, forward, train
from .frc import FrcCurve, average_curves, frc, frc_loss
from .image import apply_window, validate_image
from .spectral import build_rings, gaussian_filter_wrap, lowpass, power_normalize

__all__ = [
    "gaussian_baseline",
    "SweepTable",
    "lowpass_sensitivity_sweep",
    "write_sweep_csv",
    "DenoiseAverageResult",
    "denoise_average_experiment",
    "spectral_bias_experiment",
]


def gaussian_baseline(img: np.ndarray, sigma: float) -> np.ndarray:
    """Classical periodic Gaussian smoothing, as a denoising baseline."""
    return gaussian_filter_wrap(img, sigma)


@dataclass(frozen=True)
class SweepTable:
    """Normalized loss response to a low-pass cutoff, averaged over images."""

    cutoffs: np.ndarray
    f_over_n: np.ndarray
    l1: np.ndarray
    l2: np.ndarray
    frc: np.ndarray


def _minmax(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def lowpass_sensitivity_sweep(images: list[np.ndarray], thickness: int = 1) -> SweepTable:
    """Loss between each image and its low-passed copy, per cutoff ring.

    For every cutoff 1..max_ring the L1, L2 and ring-correlation losses are
    computed against the original; each per-image curve is min-max
    normalized before averaging. Rings emptied by the cutoff count as zero
    correlation, which is what gives the correlation loss its linear
    response.
    """
    if not images:
        raise ValueError("empty image list")
    images = [validate_image(im) for im in images]
    size = images[0].shape[0]
    for im in images:
        if im.shape != (size, size):
            raise ValueError("sweep images must be square and equally sized")

    rings = build_rings(size, size, thickness)
    cutoffs = np.arange(1, rings.max_ring + 1)
    curves = {"l1": [], "l2": [], "frc": []}
    for img in images:
        l1 = np.empty(len(cutoffs))
        l2 = np.empty(len(cutoffs))
        fr = np.empty(len(cutoffs))
        for i, cut in enumerate(cutoffs):
            filtered = lowpass(img, int(cut), thickness)
            diff = filtered - img
            l1[i] = np.mean(np.abs(diff))
            l2[i] = np.mean(diff**2)
            fr[i] = frc_loss(img, filtered, rings, on_empty="zero").loss
        curves["l1"].append(_minmax(l1))
        curves["l2"].append(_minmax(l2))
        curves["frc"].append(_minmax(fr))

    return SweepTable(
        cutoffs=cutoffs,
        f_over_n=cutoffs / rings.max_ring,
        l1=np.mean(curves["l1"], axis=0),
        l2=np.mean(curves["l2"], axis=0),
        frc=np.mean(curves["frc"], axis=0),
    )


def write_sweep_csv(table: SweepTable, path: str | Path) -> None:
    lines = ["cutoff,f_over_N,l1,l2,frc"]
    for i, cut in enumerate(table.cutoffs):
        lines.append(
            f"{int(cut)},{float(table.f_over_n[i])!r},{float(table.l1[i])!r},"
            f"{float(table.l2[i])!r},{float(table.frc[i])!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class DenoiseAverageResult:
    """Correlation-to-clean curves for averaging before vs after denoising.

    ``bias`` is mean(denoised realizations) - clean: the systematic residual
    a denoiser leaves even after unlimited averaging.
    """

    single_noisy: FrcCurve
    single_denoised: FrcCurve
    averaged_noisy: FrcCurve
    averaged_denoised: FrcCurve
    bias: np.ndarray


def denoise_average_experiment(
    model: DenoiserModel,
    clean: np.ndarray,
    noise: CorruptionSpec,
    n: int,
    window: str = "hann",
) -> DenoiseAverageResult:
    """Denoise n independent noise realizations and compare averaging orders."""
    if n < 2:
        raise ValueError(f"need at least 2 realizations, got {n}")
    clean = validate_image(clean)
    rings = build_rings(*clean.shape)
    rng = np.random.default_rng(noise.seed)

    clean_w = apply_window(clean, window)
    sum_noisy = np.zeros_like(clean)
    sum_denoised = np.zeros_like(clean)
    first_noisy = None
    first_denoised = None
    for _ in range(n):
        noisy = corrupt(clean, replace(noise, seed=int(rng.integers(2**63))))
        denoised = forward(model, noisy)
        sum_noisy += noisy
        sum_denoised += denoised
        if first_noisy is None:
            first_noisy = noisy
            first_denoised = denoised

    avg_noisy = sum_noisy / n
    avg_denoised = sum_denoised / n

    def curve(other: np.ndarray) -> FrcCurve:
        return frc(clean_w, apply_window(other, window), rings)

    return DenoiseAverageResult(
        single_noisy=curve(first_noisy),
        single_denoised=curve(first_denoised),
        averaged_noisy=curve(avg_noisy),
        averaged_denoised=curve(avg_denoised),
        bias=avg_denoised - clean,
    )


def _held_out_curve(model, eval_images, noise, seed, window):
    """Mean correlation-to-clean curve over held-out images, fixed noise seeds."""
    rng = np.random.default_rng([seed, 1])
    curves = []
    rings = build_rings(*eval_images[0].shape)
    for img in eval_images:
        noisy = corrupt(img, replace(noise, seed=int(rng.integers(2**63))))
        denoised = forward(model, noisy)
        curves.append(frc(apply_window(img, window), apply_window(denoised, window), rings))
    return average_curves(curves)


def spectral_bias_experiment(
    train_images: list[np.ndarray],
    eval_images: list[np.ndarray],
    cfg_natural: TrainConfig,
    cfg_normalized: TrainConfig,
    window: str = "hann",
) -> tuple[FrcCurve, FrcCurve]:
    """Train on natural vs power-flattened images; compare held-out recovery.

    The second config is applied to power-normalized copies of the same
    training and evaluation images; returned curves are correlation-to-clean
    (the respective ground truth) averaged over the held-out set.
    """
    train_images = [validate_image(im) for im in train_images]
    eval_images = [validate_image(im) for im in eval_images]

    model_nat, _ = train(train_images, cfg_natural)
    nat_curve = _held_out_curve(
        model_nat, eval_images, cfg_natural.noise, cfg_natural.seed, window
    )

    norm_train = [power_normalize(im) for im in train_images]
    norm_eval = [power_normalize(im) for im in eval_images]
    model_norm, _ = train(norm_train, cfg_normalized)
    norm_curve = _held_out_curve(
        model_norm, norm_eval, cfg_normalized.noise, cfg_normalized.seed, window
    )
    return nat_curve, norm_curve
