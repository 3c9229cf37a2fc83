"""Fourier ring correlation: per-ring curve, scalar loss, and analytic gradient.

The ring correlation of two real images x and y is, per ring S of the
partition,

    FRC(r) = Re( sum_S U V* ) / sqrt( sum_S |U|^2 * sum_S |V|^2 )

with U, V the unnormalized DFTs of x and y. Friedel symmetry of real-image
spectra makes the ring-summed numerator real (conjugate coefficient pairs sit
on opposite sides of each ring); the imaginary residue is checked against an
internal-consistency tolerance and discarded.

The associated loss is 1 minus the sum of ring values, or 1 minus their mean
in normalized mode (the default, which keeps the range [0, 2] independent of
image size). The loss gradient with respect to the pixels of x is computed
in closed form: each ring contributes an inverse transform of a ring-masked
combination of U and V, and all rings are accumulated into a single masked
spectrum so the whole gradient costs one extra FFT pair. Conjugate-symmetric
masking keeps the result exactly real.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .image import validate_image
from .spectral import PowerCurve, RingPartition, build_rings

__all__ = [
    "FrcCurve",
    "frc",
    "frc_scalar",
    "FrcLossValue",
    "frc_loss",
    "frc_loss_grad",
    "predict_frc_noisy",
    "predict_frc_high_noise",
    "LimitModel",
    "fit_limit_model",
    "average_curves",
    "write_frc_csv",
]

# relative tolerance on the imaginary residue of ring-summed numerators
_IMAG_TOL = 1e-8

_EMPTY_POLICIES = ("error", "zero")


@dataclass(frozen=True)
class FrcCurve:
    """Per-ring correlation values with ring metadata."""

    radii: np.ndarray
    values: np.ndarray
    ring_counts: np.ndarray

    def __post_init__(self):
        if not (len(self.radii) == len(self.values) == len(self.ring_counts)):
            raise ValueError("curve field lengths differ")

    def __len__(self) -> int:
        return len(self.radii)


def _ring_correlation(
    x: np.ndarray,
    y: np.ndarray,
    rings: RingPartition,
    include_dc: bool,
    on_empty: str,
):
    """Shared core: spectra, per-ring sums, and correlation values.

    Returns (U, V, power_x, power_y, values, live) where ``live`` marks rings
    with nonzero power in both spectra. Ring 0 is ignored entirely when
    ``include_dc`` is false, so zero-mean images are fine in that mode.
    """
    x = validate_image(x, "x")
    y = validate_image(y, "y")
    if x.shape != y.shape:
        raise ValueError(f"image dimensions differ: {x.shape} vs {y.shape}")
    rings.check_shape(x.shape)
    if on_empty not in _EMPTY_POLICIES:
        raise ValueError(f"on_empty must be one of {_EMPTY_POLICIES}, got {on_empty!r}")

    u = np.fft.fft2(x)
    v = np.fft.fft2(y)
    power_x = rings.ring_sum(np.abs(u) ** 2)
    power_y = rings.ring_sum(np.abs(v) ** 2)
    cross = u * v.conj()
    num_re = rings.ring_sum(cross.real)
    num_im = rings.ring_sum(cross.imag)

    lo = 0 if include_dc else 1
    live = (power_x > 0.0) & (power_y > 0.0)
    if on_empty == "error":
        for name, power in (("x", power_x), ("y", power_y)):
            dead = np.flatnonzero(power[lo:] == 0.0)
            if dead.size:
                raise ValueError(f"empty ring: ring {int(dead[0]) + lo} of image {name} has zero power")

    denom = np.sqrt(power_x * power_y, where=live, out=np.zeros_like(power_x))
    bad = live[lo:] & (np.abs(num_im[lo:]) > _IMAG_TOL * denom[lo:])
    if np.any(bad):
        r = int(np.flatnonzero(bad)[0]) + lo
        raise RuntimeError(
            f"ring {r} numerator has imaginary residue {num_im[r]:.3e} "
            f"(tolerance {_IMAG_TOL:.0e} x denominator); input is not a real image "
            "or the ring partition is inconsistent"
        )
    values = np.divide(num_re, denom, where=live, out=np.zeros_like(num_re))
    return u, v, power_x, power_y, values, live


def frc(
    x: np.ndarray,
    y: np.ndarray,
    rings: RingPartition | None = None,
    on_empty: str = "error",
) -> FrcCurve:
    """Ring correlation curve of two equally sized real images.

    Values lie in [-1, 1]: 1 for identical images, -1 for an image and its
    negation, near 0 for unrelated content. A ring with zero power in either
    spectrum is an error under the default policy; ``on_empty="zero"``
    records 0 for such rings instead.
    """
    x = validate_image(x, "x")
    if rings is None:
        rings = build_rings(*x.shape)
    *_, values, _ = _ring_correlation(x, y, rings, include_dc=True, on_empty=on_empty)
    return FrcCurve(radii=rings.radii, values=values, ring_counts=rings.counts.copy())


def frc_scalar(curve: FrcCurve) -> float:
    """Mean ring value: the normalized area under the curve."""
    if len(curve) == 0:
        raise ValueError("empty curve")
    return float(np.mean(curve.values))


@dataclass(frozen=True)
class FrcLossValue:
    """Loss together with the per-ring curve it was computed from."""

    loss: float
    per_ring: FrcCurve
    normalized: bool


def frc_loss(
    x: np.ndarray,
    y: np.ndarray,
    rings: RingPartition | None = None,
    normalized: bool = True,
    include_dc: bool = False,
    on_empty: str = "error",
) -> FrcLossValue:
    """Correlation loss: 1 - sum of ring values (1 - mean when normalized)."""
    x = validate_image(x, "x")
    if rings is None:
        rings = build_rings(*x.shape)
    *_, values, _ = _ring_correlation(x, y, rings, include_dc=include_dc, on_empty=on_empty)
    lo = 0 if include_dc else 1
    used = values[lo:]
    total = used.mean() if normalized else used.sum()
    curve = FrcCurve(
        radii=rings.radii[lo:],
        values=used,
        ring_counts=rings.counts[lo:].copy(),
    )
    return FrcLossValue(loss=float(1.0 - total), per_ring=curve, normalized=normalized)


def frc_loss_with_grad(
    x: np.ndarray,
    y: np.ndarray,
    rings: RingPartition | None = None,
    normalized: bool = True,
    include_dc: bool = False,
    on_empty: str = "error",
) -> tuple[FrcLossValue, np.ndarray]:
    """Loss value and its pixel gradient in one spectral pass.

    For each ring with numerator A, x-power P = sum_S |U|^2 and denominator
    B = sqrt(P * sum_S |V|^2), the ring's contribution to d(FRC)/dx is

        MN * Re( idft2( mask_S * (V / B  -  FRC * U / P) ) )

    All ring masks are disjoint, so the contributions are accumulated into
    one combined spectrum and inverted in a single transform. The combined
    spectrum inherits Friedel symmetry from U and V, which makes the inverse
    transform real; the loss sign and the 1/R normalization are applied last.
    """
    x = validate_image(x, "x")
    if rings is None:
        rings = build_rings(*x.shape)
    u, v, power_x, power_y, values, live = _ring_correlation(
        x, y, rings, include_dc=include_dc, on_empty=on_empty
    )
    lo = 0 if include_dc else 1

    used = values[lo:]
    total = used.mean() if normalized else used.sum()
    loss = FrcLossValue(
        loss=float(1.0 - total),
        per_ring=FrcCurve(
            radii=rings.radii[lo:],
            values=used,
            ring_counts=rings.counts[lo:].copy(),
        ),
        normalized=normalized,
    )

    active = live.copy()
    if lo == 1:
        active[0] = False
    inv_b = np.zeros_like(power_x)
    corr_over_p = np.zeros_like(power_x)
    inv_b[active] = 1.0 / np.sqrt(power_x[active] * power_y[active])
    corr_over_p[active] = values[active] / power_x[active]

    combined = v * rings.spread(inv_b) - u * rings.spread(corr_over_p)
    grad = np.fft.ifft2(combined).real
    m, n = x.shape
    scale = -float(m * n)
    if normalized:
        scale /= rings.max_ring + 1 - lo
    return loss, scale * grad


def frc_loss_grad(
    x: np.ndarray,
    y: np.ndarray,
    rings: RingPartition | None = None,
    normalized: bool = True,
    include_dc: bool = False,
    on_empty: str = "error",
) -> np.ndarray:
    """Gradient of :func:`frc_loss` with respect to the pixels of x."""
    _, grad = frc_loss_with_grad(
        x, y, rings, normalized=normalized, include_dc=include_dc, on_empty=on_empty
    )
    return grad


def predict_frc_noisy(
    power: PowerCurve,
    sigma: float,
    m: int,
    n: int,
    taylor: bool = False,
) -> FrcCurve:
    """Expected correlation between a clean image and a white-noise corruption.

    For additive zero-mean white noise of pixel variance sigma**2 and ring
    mean power P of the clean image, the large-ring expectation is
    1 / sqrt(1 + M*N*sigma**2 / P). ``taylor=True`` returns the first-order
    expansion 1 - M*N*sigma**2 / (2 P) instead.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    p = np.asarray(power.mean_power, dtype=np.float64)
    if np.any(p <= 0.0):
        bad = int(power.radii[np.flatnonzero(p <= 0.0)[0]])
        raise ValueError(f"ring {bad} has non-positive power; prediction undefined")
    ratio = (m * n) * sigma**2 / p
    values = 1.0 - 0.5 * ratio if taylor else 1.0 / np.sqrt(1.0 + ratio)
    return FrcCurve(
        radii=np.asarray(power.radii).copy(),
        values=values,
        ring_counts=np.asarray(power.ring_counts).copy(),
    )


def predict_frc_high_noise(
    power: PowerCurve,
    sigma: float,
    rings: RingPartition,
    m: int,
    n: int,
) -> FrcCurve:
    """Strong-noise limit of :func:`predict_frc_noisy`: sqrt(P / (M*N*sigma**2)).

    Valid when the noise power M*N*sigma**2 dominates every ring; a warning
    is emitted when it is less than 10x the maximum ring power. Values are
    clamped to 1 from above.
    """
    if sigma <= 0:
        raise ValueError("high-noise prediction requires sigma > 0")
    p = np.asarray(power.mean_power, dtype=np.float64)
    noise_power = (m * n) * sigma**2
    if noise_power < 10.0 * p.max():
        warnings.warn(
            "noise power is below 10x the maximum ring power; "
            "the high-noise approximation is unreliable here",
            stacklevel=2,
        )
    values = np.minimum(np.sqrt(p / noise_power), 1.0)
    return FrcCurve(
        radii=np.asarray(power.radii).copy(),
        values=values,
        ring_counts=np.asarray(power.ring_counts).copy(),
    )


@dataclass(frozen=True)
class LimitModel:
    """Fitted one-parameter decay model for a measured correlation curve.

    ``smooth_decay`` is 1/sqrt(1 + a r^2), the shape expected for additive
    white noise on content whose spectral power falls off as 1/r^2;
    ``high_noise_decay`` is min(1, 1/(r sqrt(a))), its strong-noise limit.
    """

    kind: str
    a: float
    residual_rms: float

    def predict(self, radii: np.ndarray) -> np.ndarray:
        r = np.asarray(radii, dtype=np.float64)
        if self.kind == "smooth_decay":
            return 1.0 / np.sqrt(1.0 + self.a * r**2)
        out = np.full_like(r, np.inf)
        np.divide(1.0, r * np.sqrt(self.a), where=r > 0, out=out)
        return np.minimum(out, 1.0)


def fit_limit_model(curve: FrcCurve, kind: str = "smooth_decay") -> LimitModel:
    """Least-squares fit of the decay factor ``a`` over rings r >= 1."""
    if kind not in ("smooth_decay", "high_noise_decay"):
        raise ValueError(f"unknown limit-model kind {kind!r}")
    radii = np.asarray(curve.radii, dtype=np.float64)
    values = np.asarray(curve.values, dtype=np.float64)
    mask = radii >= 1
    r = radii[mask]
    c = values[mask]
    if np.all(c == c[0] if c.size else True):
        raise ValueError("degenerate curve: all values equal, decay factor undetermined")
    interior = (c > 0.0) & (c < 1.0)
    if interior.sum() < 5:
        raise ValueError("need at least 5 rings with values strictly inside (0, 1) to fit")

    if kind == "high_noise_decay":
        # model b/r is linear in b = 1/sqrt(a)
        b = float(np.sum(c / r) / np.sum(1.0 / r**2))
        a0 = 1.0 / b**2 if b > 0 else 1.0
    else:
        # invert the model on interior rings for a starting point
        ri, ci = r[interior], c[interior]
        a0 = float(np.median((1.0 / ci**2 - 1.0) / ri**2))
        a0 = max(a0, 1e-12)

    def residuals(params):
        model = LimitModel(kind=kind, a=float(params[0]), residual_rms=0.0)
        return model.predict(r) - c

    sol = least_squares(
        residuals, x0=[a0], bounds=([1e-15], [np.inf]),
        xtol=1e-15, ftol=1e-15, gtol=1e-15,
    )
    a = float(sol.x[0])
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    return LimitModel(kind=kind, a=a, residual_rms=rms)


def average_curves(curves: list[FrcCurve]) -> FrcCurve:
    """Ring-wise mean of curves sharing one ring layout."""
    if not curves:
        raise ValueError("no curves to average")
    first = curves[0]
    for c in curves[1:]:
        if not np.array_equal(c.radii, first.radii):
            raise ValueError("curves have differing ring layouts")
    stacked = np.stack([c.values for c in curves])
    return FrcCurve(
        radii=first.radii.copy(),
        values=stacked.mean(axis=0),
        ring_counts=first.ring_counts.copy(),
    )


def write_frc_csv(curve: FrcCurve, path: str | Path, normalized_freq: bool = False) -> None:
    """Write "ring,frc,n_r" rows; optionally append the Nyquist-normalized axis."""
    header = "ring,frc,n_r"
    max_ring = int(np.max(curve.radii)) if len(curve) else 1
    if normalized_freq:
        header += ",f_over_N"
    lines = [header]
    for r, val, count in zip(curve.radii, curve.values, curve.ring_counts):
        row = f"{int(r)},{float(val)!r},{int(count)}"
        if normalized_freq:
            row += f",{float(r / max_ring)!r}"
        lines.append(row)
    Path(path).write_text("\n".join(lines) + "\n")
