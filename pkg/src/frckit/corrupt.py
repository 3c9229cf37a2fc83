"""Seeded corruption generators: noise models and geometric distortions.

Every generator is a pure function of (image, spec): the same seed always
produces bit-identical output, and the random draw order is fixed so the
stream does not depend on data values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .image import validate_image

__all__ = ["CorruptionSpec", "corrupt", "noise_pair"]

KINDS = ("gaussian", "lognormal", "impulse", "jitter", "motion_blur")


@dataclass(frozen=True)
class CorruptionSpec:
    """One corruption: its kind, a kind-specific magnitude, and a seed.

    level semantics: gaussian/lognormal = noise standard deviation;
    impulse = per-pixel replacement probability in (0, 1]; jitter = maximum
    displacement in pixels; motion_blur = kernel length in pixels (>= 2).
    """

    kind: str
    level: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown corruption kind {self.kind!r} (expected one of {KINDS})")
        if not self.level > 0:
            raise ValueError(f"corruption level must be > 0, got {self.level}")
        if self.kind == "impulse" and self.level > 1:
            raise ValueError(f"impulse level is a probability, got {self.level}")
        if self.kind == "motion_blur" and self.level < 2:
            raise ValueError(f"motion blur kernel length must be >= 2, got {self.level}")

    def to_line(self) -> str:
        """Serialize as a "kind=... level=... seed=..." config line."""
        level = int(self.level) if float(self.level).is_integer() else self.level
        return f"kind={self.kind} level={level} seed={self.seed}"

    @classmethod
    def from_line(cls, line: str) -> "CorruptionSpec":
        fields: dict[str, str] = {}
        for token in line.split():
            if "=" not in token:
                raise ValueError(f"bad corruption token {token!r} (expected key=value)")
            key, _, value = token.partition("=")
            fields[key] = value
        unknown = set(fields) - {"kind", "level", "seed"}
        if unknown:
            raise ValueError(f"unknown corruption key(s): {sorted(unknown)}")
        try:
            return cls(
                kind=fields["kind"],
                level=float(fields["level"]),
                seed=int(fields.get("seed", "0")),
            )
        except KeyError as exc:
            raise ValueError(f"missing corruption key {exc.args[0]!r}") from None


def _lognormal_shape(target_std: float) -> float:
    """Shape s such that exp(s Z) - 1 (Z standard normal) has the target std.

    The variance of exp(s Z) is (e^{s^2} - 1) e^{s^2}; setting u = e^{s^2}
    gives the quadratic u^2 - u - target^2 = 0.
    """
    u = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * target_std**2))
    return math.sqrt(math.log(u))


def corrupt(img: np.ndarray, spec: CorruptionSpec) -> np.ndarray:
    """Apply one corruption; deterministic for a fixed spec."""
    img = validate_image(img)
    rng = np.random.default_rng(spec.seed)
    m, n = img.shape

    if spec.kind == "gaussian":
        return img + rng.normal(0.0, spec.level, size=img.shape)

    if spec.kind == "lognormal":
        # zero-median by construction (median of exp(s Z) is 1)
        s = _lognormal_shape(spec.level)
        return img + (np.exp(s * rng.normal(size=img.shape)) - 1.0)

    if spec.kind == "impulse":
        # draw both fields unconditionally so the stream is level-independent
        hit = rng.random(size=img.shape) < spec.level
        value = np.where(rng.random(size=img.shape) < 0.5, -0.5, 0.5)
        return np.where(hit, value, img)

    if spec.kind == "jitter":
        # cyclic row/column shifts: a permutation of the pixels, each moved
        # by at most `level` along every axis
        radius = int(spec.level)
        if radius < 1:
            raise ValueError(f"jitter displacement must be >= 1 pixel, got {spec.level}")
        dx = rng.integers(-radius, radius + 1, size=m)
        dy = rng.integers(-radius, radius + 1, size=n)
        cols = (np.arange(n)[None, :] + dx[:, None]) % n
        out = img[np.arange(m)[:, None], cols]
        rows = (np.arange(m)[:, None] + dy[None, :]) % m
        return out[rows, np.arange(n)[None, :]]

    if spec.kind == "motion_blur":
        length = int(spec.level)
        shifts = np.arange(length) - (length - 1) // 2
        out = np.zeros_like(img)
        for shift in shifts:
            out += np.roll(img, -shift, axis=1)
        return out / length

    raise AssertionError(f"unhandled kind {spec.kind!r}")


def noise_pair(
    img: np.ndarray,
    spec: CorruptionSpec,
    seed_a: int,
    seed_b: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Two independent corruptions of the same clean image."""
    if seed_a == seed_b:
        raise ValueError(f"noise pair needs distinct seeds, got {seed_a} twice")
    return (
        corrupt(img, replace(spec, seed=seed_a)),
        corrupt(img, replace(spec, seed=seed_b)),
    )
