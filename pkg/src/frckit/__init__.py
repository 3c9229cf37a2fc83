"""Frequency-ring correlation toolkit.

A library and CLI for the Fourier ring correlation as a frequency-resolved
image-quality metric and as an analytically differentiable training loss,
with seeded corruption generators, classical reference metrics, and a small
trainable denoiser for loss-comparison experiments.
"""

from .image import (
    SyntheticImageSpec,
    apply_window,
    center_crop,
    generate_synthetic,
    hann_window,
    load_image,
    normalize_range,
    random_crop,
    save_image,
    validate_image,
)
from .spectral import (
    PowerCurve,
    RingPartition,
    build_rings,
    dft2,
    gaussian_filter_wrap,
    idft2,
    lowpass,
    power_normalize,
    ring_mean_power,
    write_power_csv,
)
from .frc import (
    FrcCurve,
    FrcLossValue,
    LimitModel,
    average_curves,
    fit_limit_model,
    frc,
    frc_loss,
    frc_loss_grad,
    frc_scalar,
    predict_frc_high_noise,
    predict_frc_noisy,
    write_frc_csv,
)
from .metrics import MetricReport, SsimParams, compute_report, mse, pearson, psnr, ssim
from .corrupt import CorruptionSpec, corrupt, noise_pair
from .denoise import (
    ConvLayer,
    Denoiser,
    DenoiserModel,
    TrainConfig,
    TrainingTrace,
    backward,
    forward,
    init_model,
    load_model,
    save_model,
    train,
    write_trace_csv,
)
from .experiments import (
    DenoiseAverageResult,
    SweepTable,
    denoise_average_experiment,
    gaussian_baseline,
    lowpass_sensitivity_sweep,
    spectral_bias_experiment,
    write_sweep_csv,
)

__version__ = "0.1.0"

__all__ = [
    "SyntheticImageSpec", "apply_window", "center_crop", "generate_synthetic",
    "hann_window", "load_image", "normalize_range", "random_crop", "save_image",
    "validate_image",
    "PowerCurve", "RingPartition", "build_rings", "dft2", "gaussian_filter_wrap",
    "idft2", "lowpass", "power_normalize", "ring_mean_power", "write_power_csv",
    "FrcCurve", "FrcLossValue", "LimitModel", "average_curves", "fit_limit_model",
    "frc", "frc_loss", "frc_loss_grad", "frc_scalar", "predict_frc_high_noise",
    "predict_frc_noisy", "write_frc_csv",
    "MetricReport", "SsimParams", "compute_report", "mse", "pearson", "psnr", "ssim",
    "CorruptionSpec", "corrupt", "noise_pair",
    "ConvLayer", "Denoiser", "DenoiserModel", "TrainConfig", "TrainingTrace",
    "backward", "forward", "init_model", "load_model", "save_model", "train",
    "write_trace_csv",
    "DenoiseAverageResult", "SweepTable", "denoise_average_experiment",
    "gaussian_baseline", "lowpass_sensitivity_sweep", "spectral_bias_experiment",
    "write_sweep_csv",
]
