"""Classical reference metrics: MSE, PSNR, SSIM, and Pearson correlation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate, uniform_filter

from .image import apply_window, validate_image
from .frc import frc_loss
from .spectral import RingPartition

__all__ = [
    "mse",
    "psnr",
    "SsimParams",
    "ssim",
    "pearson",
    "MetricReport",
    "compute_report",
]


def _check_pair(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = validate_image(x, "x")
    y = validate_image(y, "y")
    if x.shape != y.shape:
        raise ValueError(f"image dimensions differ: {x.shape} vs {y.shape}")
    return x, y


def mse(x: np.ndarray, y: np.ndarray) -> float:
    """Mean squared pixel difference."""
    x, y = _check_pair(x, y)
    return float(np.mean((x - y) ** 2))


def psnr(x: np.ndarray, y: np.ndarray, peak: float) -> float:
    """Peak signal-to-noise ratio in dB; identical images give +inf.

    ``peak`` is the maximum possible value of the clean image and must be
    supplied explicitly (1.0 for images normalized to a unit range).
    """
    if peak <= 0:
        raise ValueError(f"peak must be > 0, got {peak}")
    err = mse(x, y)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / err)


@dataclass(frozen=True)
class SsimParams:
    """SSIM configuration. The default is a uniform 7x7 window on unit range.

    ``gaussian_weights=True`` switches to the common 11x11 Gaussian window
    with sigma 1.5.
    """

    window_size: int = 7
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0
    gaussian_weights: bool = False

    def __post_init__(self):
        if self.window_size < 1 or self.window_size % 2 == 0:
            raise ValueError(f"window_size must be odd and positive, got {self.window_size}")
        if self.dynamic_range <= 0:
            raise ValueError("dynamic_range must be > 0")


def ssim(x: np.ndarray, y: np.ndarray, params: SsimParams | None = None) -> float:
    """Mean local structural similarity over sliding windows.

    Per window: ((2 mx my + C1)(2 cov + C2)) / ((mx^2 + my^2 + C1)(vx + vy + C2))
    with C1 = (k1 L)^2, C2 = (k2 L)^2. Only windows fully inside the image
    contribute to the mean.
    """
    x, y = _check_pair(x, y)
    if params is None:
        params = SsimParams()
    win = 11 if params.gaussian_weights else params.window_size
    if win > min(x.shape):
        raise ValueError(f"window size {win} exceeds image dimensions {x.shape}")

    if params.gaussian_weights:
        ax = np.arange(win) - win // 2
        k1d = np.exp(-(ax**2) / (2.0 * 1.5**2))
        kernel = np.outer(k1d, k1d)
        kernel /= kernel.sum()

        def local_mean(a):
            return correlate(a, kernel, mode="nearest")
    else:

        def local_mean(a):
            return uniform_filter(a, size=win, mode="nearest")

    mu_x = local_mean(x)
    mu_y = local_mean(y)
    var_x = local_mean(x * x) - mu_x**2
    var_y = local_mean(y * y) - mu_y**2
    cov = local_mean(x * y) - mu_x * mu_y

    c1 = (params.k1 * params.dynamic_range) ** 2
    c2 = (params.k2 * params.dynamic_range) ** 2
    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    )

    pad = win // 2
    return float(ssim_map[pad:-pad or None, pad:-pad or None].mean())


def pearson(a, b) -> float:
    """Sample Pearson correlation coefficient of two equal-length sequences."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 3:
        raise ValueError("need at least 3 samples")
    da = a - a.mean()
    db = b - b.mean()
    na = np.sqrt(np.sum(da**2))
    nb = np.sqrt(np.sum(db**2))
    if na == 0.0 or nb == 0.0:
        raise ValueError("constant input list has undefined correlation")
    return float(np.clip(np.sum(da * db) / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class MetricReport:
    """All four comparison scores for one image pair."""

    mse: float
    psnr: float
    ssim: float
    frc_scalar: float


def compute_report(
    x: np.ndarray,
    y: np.ndarray,
    peak: float = 1.0,
    ssim_params: SsimParams | None = None,
    rings: RingPartition | None = None,
    window: str = "hann",
) -> MetricReport:
    """Score a pair with every metric. The window applies to the FRC part only."""
    x, y = _check_pair(x, y)
    err = mse(x, y)
    loss = frc_loss(
        apply_window(x, window), apply_window(y, window),
        rings=rings, normalized=True, include_dc=False,
    )
    return MetricReport(
        mse=err,
        psnr=psnr(x, y, peak),
        ssim=ssim(x, y, ssim_params),
        frc_scalar=1.0 - loss.loss,
    )
