"""Core image type, file I/O, windowing, cropping and synthetic test images.

Images are plain 2D float64 numpy arrays throughout the package. The helpers
here validate that convention at the API boundary and provide the two on-disk
formats: PGM (P2/P5, 8- and 16-bit) and a raw float32 raster ("FIMG").
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "validate_image",
    "load_image",
    "save_image",
    "normalize_range",
    "hann_window",
    "apply_window",
    "center_crop",
    "random_crop",
    "SyntheticImageSpec",
    "generate_synthetic",
]

FIMG_MAGIC = b"FIMG"

WINDOW_KINDS = ("none", "hann")


def validate_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Check the 2D-grayscale contract and return the array as C-order float64.

    Requires at least 2x2 pixels and all-finite values.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2D, got shape {arr.shape}")
    if arr.shape[0] < 2 or arr.shape[1] < 2:
        raise ValueError(f"{name} must be at least 2x2, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def _read_pgm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Read `count` ASCII integer tokens from a PGM header, skipping comments.

    Returns the tokens and the offset of the first byte after the final
    single whitespace that terminates the header.
    """
    tokens: list[int] = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise ValueError("truncated PGM header")
        c = data[i:i + 1]
        if c == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            tok = data[i:j]
            try:
                tokens.append(int(tok))
            except ValueError:
                raise ValueError(f"bad PGM header token {tok!r}") from None
            i = j
    # exactly one whitespace byte separates the header from binary data
    if i < len(data) and data[i:i + 1].isspace():
        i += 1
    return tokens, i


def _load_pgm(data: bytes, path: Path) -> np.ndarray:
    magic = data[:2]
    width, height, maxval = 0, 0, 0
    if magic == b"P5" or magic == b"P2":
        (width, height, maxval), offset = _read_pgm_tokens(data[2:], 3)
        offset += 2
    else:
        raise ValueError(f"unsupported format in {path}: not P2/P5 PGM or FIMG")
    if width <= 0 or height <= 0:
        raise ValueError(f"zero-sized image in {path}")
    if not 0 < maxval < 65536:
        raise ValueError(f"bad PGM maxval {maxval} in {path}")

    if magic == b"P5":
        if maxval < 256:
            raw = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=offset)
        else:
            # 16-bit PGM stores the most significant byte first
            raw = np.frombuffer(data, dtype=">u2", count=width * height, offset=offset)
    else:
        toks = data[offset:].split()
        if len(toks) < width * height:
            raise ValueError(f"truncated P2 data in {path}")
        raw = np.array([int(t) for t in toks[: width * height]], dtype=np.uint32)
    if raw.size != width * height:
        raise ValueError(f"truncated PGM data in {path}")
    # integer sample values map linearly onto [0, 1]
    return raw.reshape(height, width).astype(np.float64) / float(maxval)


def _load_fimg(data: bytes, path: Path) -> np.ndarray:
    if len(data) < 12:
        raise ValueError(f"truncated FIMG header in {path}")
    height, width = struct.unpack("<II", data[4:12])
    if height == 0 or width == 0:
        raise ValueError(f"zero-sized image in {path}")
    expected = height * width
    raw = np.frombuffer(data, dtype="<f4", count=expected, offset=12)
    if raw.size != expected:
        raise ValueError(f"truncated FIMG data in {path}")
    return raw.reshape(height, width).astype(np.float64)


def load_image(path: str | Path) -> np.ndarray:
    """Load a PGM (P2/P5) or FIMG raster as a float64 image.

    8/16-bit PGM samples are mapped linearly to [0, 1]; FIMG stores float32
    values verbatim.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"file not found: {path}")
    data = path.read_bytes()
    if data[:4] == FIMG_MAGIC:
        img = _load_fimg(data, path)
    elif data[:1] == b"P":
        img = _load_pgm(data, path)
    else:
        raise ValueError(f"unsupported format in {path}: not P2/P5 PGM or FIMG")
    return validate_image(img, name=str(path))


def save_image(path: str | Path, img: np.ndarray) -> None:
    """Write an image to disk; format is chosen by extension.

    ``.fimg`` stores float32 values exactly (lossless for float32-valued
    arrays, so save/load round-trips bit-exactly). ``.pgm`` writes a 16-bit
    P5 file with values clipped to [0, 1].
    """
    path = Path(path)
    img = validate_image(img)
    suffix = path.suffix.lower()
    if suffix == ".fimg":
        height, width = img.shape
        payload = FIMG_MAGIC + struct.pack("<II", height, width)
        payload += img.astype("<f4").tobytes()
        path.write_bytes(payload)
    elif suffix == ".pgm":
        height, width = img.shape
        scaled = np.clip(img, 0.0, 1.0) * 65535.0
        samples = np.round(scaled).astype(">u2")
        header = f"P5\n{width} {height}\n65535\n".encode("ascii")
        path.write_bytes(header + samples.tobytes())
    else:
        raise ValueError(f"unsupported output format {suffix!r} (use .pgm or .fimg)")


# ---------------------------------------------------------------------------
# Value range, windowing, cropping
# ---------------------------------------------------------------------------

def normalize_range(img: np.ndarray) -> np.ndarray:
    """Affinely map the image onto [-0.5, 0.5] with exact endpoints."""
    img = validate_image(img)
    lo = img.min()
    hi = img.max()
    if hi == lo:
        raise ValueError("degenerate dynamic range: constant image cannot be normalized")
    return (img - lo) / (hi - lo) - 0.5


def hann_window(shape: tuple[int, int]) -> np.ndarray:
    """Separable 2D Hann surface; zero on the border rows/columns."""
    m, n = shape
    return np.outer(np.hanning(m), np.hanning(n))


def apply_window(img: np.ndarray, kind: str = "hann") -> np.ndarray:
    """Multiply by the named window; ``kind="none"`` is the identity."""
    img = validate_image(img)
    if kind == "none":
        return img
    if kind == "hann":
        return img * hann_window(img.shape)
    raise ValueError(f"unknown window kind {kind!r} (expected one of {WINDOW_KINDS})")


def center_crop(img: np.ndarray, size: int) -> np.ndarray:
    """Central size x size sub-image."""
    img = validate_image(img)
    m, n = img.shape
    if size > min(m, n):
        raise ValueError(f"crop size {size} exceeds image dimensions {m}x{n}")
    top = (m - size) // 2
    left = (n - size) // 2
    return img[top:top + size, left:left + size].copy()


def random_crop(img: np.ndarray, size: int, rng: np.random.Generator | int) -> np.ndarray:
    """Seeded random size x size sub-image (uniform over valid offsets)."""
    img = validate_image(img)
    m, n = img.shape
    if size > min(m, n):
        raise ValueError(f"crop size {size} exceeds image dimensions {m}x{n}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    top = int(rng.integers(0, m - size + 1))
    left = int(rng.integers(0, n - size + 1))
    return img[top:top + size, left:left + size].copy()


# ---------------------------------------------------------------------------
# Synthetic test images
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticImageSpec:
    """Recipe for a random image with a power-law amplitude spectrum.

    ``spectral_exponent`` is the decay exponent of the ring-averaged
    amplitude spectrum: <|F|> ~ r**(-spectral_exponent). The default 1.0
    mimics the classic natural-image statistic.
    """

    size: int
    spectral_exponent: float = 1.0
    seed: int = 0


def generate_synthetic(spec: SyntheticImageSpec) -> np.ndarray:
    """Deterministic random image whose amplitude spectrum decays as a power law.

    Construction: white Gaussian noise supplies Friedel-symmetric random
    phases, amplitudes are set exactly to r**(-exponent), the DC term is
    zeroed, and the result is range-normalized to [-0.5, 0.5].
    """
    if spec.size < 8:
        raise ValueError(f"synthetic image size must be >= 8, got {spec.size}")
    if spec.spectral_exponent < 0:
        raise ValueError("spectral_exponent must be >= 0")
    rng = np.random.default_rng(spec.seed)
    noise = rng.normal(size=(spec.size, spec.size))
    phases = np.fft.fft2(noise)
    mag = np.abs(phases)
    phases = phases / np.where(mag == 0.0, 1.0, mag)

    freqs = np.fft.fftfreq(spec.size) * spec.size
    rho = np.hypot(freqs[:, None], freqs[None, :])
    amplitude = np.zeros_like(rho)
    nonzero = rho > 0
    amplitude[nonzero] = rho[nonzero] ** (-spec.spectral_exponent)

    coeffs = amplitude * phases
    coeffs[0, 0] = 0.0
    img = np.fft.ifft2(coeffs).real
    return normalize_range(img)
