"""2D DFT conventions, ring partitioning of frequency space, and ring filters.

Conventions used everywhere in this package:

* forward transform ``dft2`` is the plain unnormalized DFT sum (numpy's
  ``fft2``); the inverse carries the 1/(MN) factor. Under this convention
  Parseval reads ``sum |coeffs|**2 == M*N * sum(pixels**2)`` and white noise
  of pixel variance sigma**2 has flat spectral power ``M*N*sigma**2``.
* frequency coordinates are centered: index p maps to p' = p for p < M/2 and
  p - M for p >= M/2, so p' lies in [-M/2, M/2).
* ring r of a partition with a given thickness collects the coefficients
  whose centered radius rho = hypot(p', q') rounds to r, i.e.
  ``round(rho / thickness) == r``. Ring 0 is the DC coefficient alone for
  thickness <= 2. Rings are Nyquist-limited by default: indices above
  ``max_ring = floor(min(M, N) / 2 / thickness)`` (the partially sampled
  corner rings) are excluded unless requested.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .image import validate_image

__all__ = [
    "dft2",
    "idft2",
    "ring_indices",
    "RingPartition",
    "build_rings",
    "PowerCurve",
    "ring_mean_power",
    "write_power_csv",
    "lowpass",
    "gaussian_filter_wrap",
    "power_normalize",
]


def dft2(img: np.ndarray) -> np.ndarray:
    """Unnormalized forward 2D DFT of a real image."""
    return np.fft.fft2(validate_image(img))


def idft2(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`dft2` (carries the 1/(MN) normalization)."""
    return np.fft.ifft2(np.asarray(coeffs, dtype=np.complex128))


def centered_radius(m: int, n: int) -> np.ndarray:
    """Centered frequency radius rho for every (p, q) in an m x n spectrum."""
    fp = np.fft.fftfreq(m) * m
    fq = np.fft.fftfreq(n) * n
    return np.hypot(fp[:, None], fq[None, :])


def ring_indices(m: int, n: int, thickness: int = 1) -> np.ndarray:
    """Ring index round(rho / thickness) for every coefficient, unclipped.

    Half-way radii round up; for thickness 1 no half-way radius exists
    because rho**2 is always an integer.
    """
    if thickness < 1:
        raise ValueError(f"ring thickness must be >= 1, got {thickness}")
    rho = centered_radius(m, n)
    return np.floor(rho / float(thickness) + 0.5).astype(np.int64)


class RingPartition:
    """Immutable assignment of spectrum coefficients to concentric annuli.

    ``labels`` holds each coefficient's ring index, with -1 for excluded
    (beyond ``max_ring``) coefficients. Build once per image size and share
    freely across threads; all methods are read-only.
    """

    def __init__(self, m: int, n: int, thickness: int = 1, include_partial: bool = False):
        if m < 2 or n < 2:
            raise ValueError(f"spectrum must be at least 2x2, got {m}x{n}")
        idx = ring_indices(m, n, thickness)
        if include_partial:
            max_ring = int(idx.max())
        else:
            max_ring = (min(m, n) // 2) // thickness
        labels = np.where(idx <= max_ring, idx, -1)
        labels.setflags(write=False)

        self.shape = (m, n)
        self.thickness = thickness
        self.max_ring = max_ring
        self.labels = labels
        self.counts = np.bincount(labels[labels >= 0], minlength=max_ring + 1)
        self.counts.setflags(write=False)
        flat = labels.ravel()
        self._included = np.flatnonzero(flat >= 0)
        self._included_labels = flat[self._included]

    @property
    def radii(self) -> np.ndarray:
        return np.arange(self.max_ring + 1)

    def check_shape(self, shape: tuple[int, int]) -> None:
        if tuple(shape) != self.shape:
            raise ValueError(f"ring partition built for {self.shape}, got array of shape {tuple(shape)}")

    def ring_sum(self, values: np.ndarray) -> np.ndarray:
        """Per-ring sums of a real-valued array over the spectrum grid."""
        self.check_shape(values.shape)
        flat = values.ravel()[self._included]
        return np.bincount(self._included_labels, weights=flat, minlength=self.max_ring + 1)

    def coords(self, r: int) -> np.ndarray:
        """(p, q) index pairs of ring r, shape (n_r, 2)."""
        if not 0 <= r <= self.max_ring:
            raise ValueError(f"ring {r} outside partition range 0..{self.max_ring}")
        return np.argwhere(self.labels == r)

    def spread(self, per_ring: np.ndarray, fill: float = 0.0) -> np.ndarray:
        """Expand per-ring values onto the full spectrum grid."""
        out = np.full(self.shape, fill, dtype=np.asarray(per_ring).dtype)
        mask = self.labels >= 0
        out[mask] = np.asarray(per_ring)[self.labels[mask]]
        return out


def build_rings(m: int, n: int, thickness: int = 1, include_partial: bool = False) -> RingPartition:
    """Partition an m x n spectrum into annuli of the given thickness.

    ``include_partial=True`` keeps the partially sampled rings between the
    Nyquist radius and the spectrum corner instead of dropping them.
    """
    return RingPartition(m, n, thickness=thickness, include_partial=include_partial)


@dataclass(frozen=True)
class PowerCurve:
    """Ring-averaged spectral power <|F|^2> with ring metadata."""

    radii: np.ndarray
    mean_power: np.ndarray
    ring_counts: np.ndarray

    def __post_init__(self):
        if not (len(self.radii) == len(self.mean_power) == len(self.ring_counts)):
            raise ValueError("power curve field lengths differ")
        if np.any(np.asarray(self.mean_power) < 0):
            raise ValueError("ring power cannot be negative")


def ring_mean_power(coeffs: np.ndarray, rings: RingPartition) -> PowerCurve:
    """Mean |coefficient|^2 per ring."""
    coeffs = np.asarray(coeffs)
    rings.check_shape(coeffs.shape)
    totals = rings.ring_sum(np.abs(coeffs) ** 2)
    return PowerCurve(
        radii=rings.radii.copy(),
        mean_power=totals / rings.counts,
        ring_counts=rings.counts.copy(),
    )


def write_power_csv(curve: PowerCurve, path: str | Path) -> None:
    lines = ["ring,mean_power"]
    for r, p in zip(curve.radii, curve.mean_power):
        lines.append(f"{int(r)},{float(p)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def lowpass(img: np.ndarray, cutoff: int, thickness: int = 1) -> np.ndarray:
    """Zero all spectral rings above ``cutoff`` and inverse transform.

    Ring indices beyond the Nyquist limit (the partial corner rings) are
    clamped to ``max_ring``, so ``cutoff == max_ring`` is the exact identity
    while ``cutoff == 0`` keeps only the DC term (a constant image equal to
    the mean).
    """
    img = validate_image(img)
    m, n = img.shape
    max_ring = (min(m, n) // 2) // thickness
    if not 0 <= cutoff <= max_ring:
        raise ValueError(f"cutoff {cutoff} out of range 0..{max_ring}")
    if cutoff == max_ring:
        return img.copy()
    idx = np.minimum(ring_indices(m, n, thickness), max_ring)
    coeffs = np.fft.fft2(img)
    coeffs[idx > cutoff] = 0.0
    return np.fft.ifft2(coeffs).real


def gaussian_filter_wrap(img: np.ndarray, sigma: float) -> np.ndarray:
    """Periodic smoothing by an isotropic Gaussian, applied in the frequency domain.

    The transfer function exp(-2 pi^2 sigma^2 rho^2 / (M N)) is real,
    positive and a function of the centered radius only, so it rescales each
    frequency ring uniformly. ``sigma`` below 1e-6 degenerates to the
    identity.
    """
    img = validate_image(img)
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if sigma < 1e-6:
        return img.copy()
    m, n = img.shape
    rho2 = centered_radius(m, n) ** 2
    transfer = np.exp(-2.0 * np.pi**2 * sigma**2 * rho2 / (m * n))
    return np.fft.ifft2(np.fft.fft2(img) * transfer).real


def power_normalize(img: np.ndarray, rings: RingPartition | None = None) -> np.ndarray:
    """Flatten the ring-averaged power spectrum while preserving phases.

    Every ring r >= 1 of the partition is rescaled to the same mean power,
    chosen so that the total power over those rings is unchanged. The DC
    coefficient (image mean) and any coefficients outside the partition are
    left untouched.
    """
    img = validate_image(img)
    if rings is None:
        rings = build_rings(*img.shape)
    else:
        rings.check_shape(img.shape)

    coeffs = np.fft.fft2(img)
    totals = rings.ring_sum(np.abs(coeffs) ** 2)
    if np.any(totals[1:] == 0.0):
        empty = int(np.flatnonzero(totals[1:] == 0.0)[0]) + 1
        raise ValueError(f"empty ring, cannot normalize: ring {empty} has zero power")

    target = totals[1:].sum() / rings.counts[1:].sum()
    scale = np.sqrt(target * rings.counts / totals)
    scale[0] = 1.0
    coeffs = coeffs * rings.spread(scale, fill=1.0)
    return np.fft.ifft2(coeffs).real
