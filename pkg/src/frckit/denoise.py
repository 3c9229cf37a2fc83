"""Small convolutional denoiser trained from scratch with selectable loss.

The network is a plain stack of 3x3 convolutions with wrap (periodic)
padding, so output size always equals input size and the model is consistent
with the package's periodic world-view. Backpropagation, Adam and the
noisy-pair training scheme (two independent corruptions of the same clean
crop as input and target) are implemented directly in numpy; training is
deterministic for a fixed config seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .corrupt import CorruptionSpec, corrupt, noise_pair
from .frc import frc_loss, frc_loss_with_grad
from .image import apply_window, random_crop, validate_image
from .metrics import mse as mse_metric
from .metrics import ssim as ssim_metric
from .spectral import RingPartition, build_rings

__all__ = [
    "ConvLayer",
    "DenoiserModel",
    "init_model",
    "forward",
    "backward",
    "TrainConfig",
    "TrainingTrace",
    "write_trace_csv",
    "train",
    "save_model",
    "load_model",
    "Denoiser",
]

ACTIVATIONS = ("relu", "identity")
LOSSES = ("l1", "l2", "frc")

MODEL_MAGIC = b"FDNM"
MODEL_VERSION = 1

# kernel offset (u, v) for flat tap index k = (u+1)*3 + (v+1)
_OFFSETS = [(u, v) for u in (-1, 0, 1) for v in (-1, 0, 1)]


@dataclass
class ConvLayer:
    """One 3x3 convolution with wrap padding and an optional ReLU."""

    weights: np.ndarray  # (out_channels, in_channels, 3, 3)
    bias: np.ndarray     # (out_channels,)
    activation: str

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 4 or self.weights.shape[2:] != (3, 3):
            raise ValueError(f"weights must be (out, in, 3, 3), got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError("bias length must equal the output channel count")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("layer parameters must be finite")

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]


@dataclass
class DenoiserModel:
    """Channel-chained stack of :class:`ConvLayer`, single channel in and out."""

    layers: list[ConvLayer]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("model needs at least one layer")
        if self.layers[0].in_channels != 1 or self.layers[-1].out_channels != 1:
            raise ValueError("model must map 1 channel to 1 channel")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_channels != b.in_channels:
                raise ValueError(
                    f"channel chain broken: {a.out_channels} out vs {b.in_channels} in"
                )

    def copy(self) -> "DenoiserModel":
        return DenoiserModel(
            [ConvLayer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )


def init_model(seed: int, channels: int = 16) -> DenoiserModel:
    """Default 3-layer architecture (1 -> C relu, C -> C relu, C -> 1 linear).

    Weights are seeded uniform in [-k, k] with k = 1/sqrt(fan_in); biases
    start at zero.
    """
    rng = np.random.default_rng(seed)
    dims = [(1, channels, "relu"), (channels, channels, "relu"), (channels, 1, "identity")]
    layers = []
    for cin, cout, act in dims:
        k = 1.0 / np.sqrt(cin * 9)
        layers.append(
            ConvLayer(
                weights=rng.uniform(-k, k, size=(cout, cin, 3, 3)),
                bias=np.zeros(cout),
                activation=act,
            )
        )
    return DenoiserModel(layers)


def _buf(work: dict | None, key, shape: tuple) -> np.ndarray:
    """Fetch a reusable buffer from the workspace (or allocate a fresh one).

    The training loop allocates tens of MB per step; recycling the buffers
    avoids repeated page-fault costs on large fresh allocations.
    """
    if work is None:
        return np.empty(shape)
    buf = work.get(key)
    if buf is None or buf.shape != shape:
        buf = np.empty(shape)
        work[key] = buf
    return buf


def _rolled(x: np.ndarray, sign: int = 1, work: dict | None = None, key=None) -> np.ndarray:
    """Stack of the 9 wrap-shifted copies used by a 3x3 conv: (B, C, 9, M, N).

    ``sign=1`` shifts by (+u, +v) as the forward conv needs; ``sign=-1``
    gives the opposite shifts used when backpropagating to the input.
    """
    b, c, m, n = x.shape
    padded = _buf(work, ("pad", key), (b, c, m + 2, n + 2))
    padded[:, :, 1:-1, 1:-1] = x
    padded[:, :, 0, 1:-1] = x[:, :, -1, :]
    padded[:, :, -1, 1:-1] = x[:, :, 0, :]
    padded[:, :, :, 0] = padded[:, :, :, -2]
    padded[:, :, :, -1] = padded[:, :, :, 1]
    s0, s1, s2, s3 = padded.strides
    view = np.lib.stride_tricks.as_strided(padded, (b, c, 3, 3, m, n), (s0, s1, s2, s3, s2, s3))
    if sign == -1:
        view = view[:, :, ::-1, ::-1]
    taps = _buf(work, ("taps", key), (b, c, 9, m, n))
    np.copyto(taps.reshape(b, c, 3, 3, m, n), view)
    return taps


def _forward_batch(model: DenoiserModel, x: np.ndarray, want_cache: bool, work: dict | None = None):
    """Run a (B, 1, M, N) batch; optionally keep per-layer data for backward."""
    cache = [] if want_cache else None
    out = x
    for li, layer in enumerate(model.layers):
        b, cin, m, n = out.shape
        taps = _rolled(out, work=work, key=("fwd", li))
        w = layer.weights.reshape(layer.out_channels, -1)
        pre = _buf(work, ("pre", li), (b, layer.out_channels, m, n))
        np.matmul(w, taps.reshape(b, cin * 9, m * n), out=pre.reshape(b, layer.out_channels, m * n))
        pre += layer.bias[None, :, None, None]
        if want_cache:
            cache.append((out, pre, taps))
        if layer.activation == "relu":
            act = _buf(work, ("act", li), pre.shape)
            np.maximum(pre, 0.0, out=act)
            out = act
        else:
            out = pre
    return out, cache


def _backward_batch(model: DenoiserModel, cache, upstream: np.ndarray, work: dict | None = None):
    """Parameter gradients (summed over the batch) and the input gradient."""
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(model.layers)
    g = upstream
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        x_in, pre, taps = cache[i]
        if layer.activation == "relu":
            masked = _buf(work, ("g", i), g.shape)
            np.multiply(g, pre > 0.0, out=masked)
            g = masked
        b, cin, m, n = x_in.shape
        gw = (
            g.reshape(b, layer.out_channels, -1)
            @ taps.reshape(b, -1, m * n).transpose(0, 2, 1)
        ).sum(axis=0).reshape(layer.weights.shape)
        gb = g.sum(axis=(0, 2, 3))
        grads[i] = (gw, gb)
        # chain to the layer input: correlate the upstream with the kernel
        # transposed in channels and reflected in space
        g_taps = _rolled(g, sign=-1, work=work, key=("bwd", i))
        w_t = layer.weights.reshape(layer.out_channels, cin, 9)
        w_t = np.ascontiguousarray(w_t.transpose(1, 0, 2)).reshape(cin, -1)
        g_next = _buf(work, ("gx", i), (b, cin, m, n))
        np.matmul(w_t, g_taps.reshape(b, -1, m * n), out=g_next.reshape(b, cin, m * n))
        g = g_next
    return grads, g


def forward(model: DenoiserModel, img: np.ndarray) -> np.ndarray:
    """Denoise one image."""
    img = validate_image(img)
    out, _ = _forward_batch(model, img[None, None], want_cache=False)
    return out[0, 0]


def backward(model: DenoiserModel, img: np.ndarray, upstream: np.ndarray):
    """Gradients of a scalar loss w.r.t. every weight and bias.

    ``upstream`` is the loss gradient at the model output; the return value
    is one (weight_grad, bias_grad) pair per layer.
    """
    img = validate_image(img)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != img.shape:
        raise ValueError(f"upstream gradient shape {upstream.shape} != image shape {img.shape}")
    _, cache = _forward_batch(model, img[None, None], want_cache=True)
    grads, _ = _backward_batch(model, cache, upstream[None, None])
    return grads


class Adam:
    """Standard Adam over the model's parameter list, in fixed layer order."""

    def __init__(self, model: DenoiserModel, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in model.layers]
        self.v = [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in model.layers]

    def step(self, model: DenoiserModel, grads) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for i, layer in enumerate(model.layers):
            for j, (param, grad) in enumerate(((layer.weights, grads[i][0]), (layer.bias, grads[i][1]))):
                m = self.m[i][j]
                v = self.v[i][j]
                m *= self.beta1
                m += (1.0 - self.beta1) * grad
                v *= self.beta2
                v += (1.0 - self.beta2) * grad**2
                param -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run."""

    loss: str
    steps: int
    noise: CorruptionSpec
    crop_size: int
    batch_size: int = 10
    learning_rate: float = 3e-4
    optimizer: str = "adam"
    adam_betas: tuple[float, float] = (0.9, 0.999)
    seed: int = 0
    ring_thickness: int = 1
    channels: int = 16

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r} (expected one of {LOSSES})")
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        if self.steps < 0 or self.batch_size < 1 or self.crop_size < 2:
            raise ValueError("invalid steps/batch_size/crop_size")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class TrainingTrace:
    """Loss and held-out metrics at logarithmically spaced steps."""

    steps: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    frc_scalar: list[float] = field(default_factory=list)
    mse: list[float] = field(default_factory=list)
    ssim: list[float] = field(default_factory=list)


def write_trace_csv(trace: TrainingTrace, path: str | Path) -> None:
    lines = ["step,loss,frc_scalar,mse,ssim"]
    for i, step in enumerate(trace.steps):
        lines.append(
            f"{step},{trace.loss[i]!r},{trace.frc_scalar[i]!r},"
            f"{trace.mse[i]!r},{trace.ssim[i]!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def _loss_and_upstream(kind: str, out: np.ndarray, target: np.ndarray, rings: RingPartition):
    npix = out.size
    if kind == "l2":
        diff = out - target
        return float(np.mean(diff**2)), 2.0 * diff / npix
    if kind == "l1":
        diff = out - target
        return float(np.mean(np.abs(diff))), np.sign(diff) / npix
    value, grad = frc_loss_with_grad(out, target, rings)
    return value.loss, grad


def _eval_metrics(model, eval_pairs, rings):
    frcs, mses, ssims = [], [], []
    for clean, noisy in eval_pairs:
        den = forward(model, noisy)
        loss = frc_loss(apply_window(clean), apply_window(den), rings)
        frcs.append(1.0 - loss.loss)
        mses.append(mse_metric(clean, den))
        ssims.append(ssim_metric(clean, den))
    return float(np.mean(frcs)), float(np.mean(mses)), float(np.mean(ssims))


def train(
    images: list[np.ndarray],
    cfg: TrainConfig,
    eval_images: list[np.ndarray] | None = None,
    model: DenoiserModel | None = None,
) -> tuple[DenoiserModel, TrainingTrace]:
    """Train with noisy pairs drawn from clean images.

    Every step samples ``batch_size`` seeded random crops; each crop gets two
    fresh, independent corruptions, one used as input and one as target.
    Held-out metrics (on ``eval_images``, each corrupted once with a fixed
    derived seed) and the training loss are logged at power-of-two steps.
    """
    if not images:
        raise ValueError("need at least one training image")
    images = [validate_image(im) for im in images]
    for im in images:
        if cfg.crop_size > min(im.shape):
            raise ValueError(
                f"crop size {cfg.crop_size} exceeds a training image of shape {im.shape}"
            )

    rng = np.random.default_rng([cfg.seed, 0])
    if model is None:
        model = init_model(int(rng.integers(2**63)), channels=cfg.channels)
    else:
        model = model.copy()

    crop_rings = build_rings(cfg.crop_size, cfg.crop_size, cfg.ring_thickness)
    eval_pairs = []
    eval_rings = None
    if eval_images:
        eval_rng = np.random.default_rng([cfg.seed, 1])
        for img in eval_images:
            img = validate_image(img)
            spec = replace(cfg.noise, seed=int(eval_rng.integers(2**63)))
            eval_pairs.append((img, corrupt(img, spec)))
        eval_rings = build_rings(*eval_pairs[0][0].shape, cfg.ring_thickness)

    trace = TrainingTrace()

    def log(step: int, loss_value: float) -> None:
        if eval_pairs:
            f, m, s = _eval_metrics(model, eval_pairs, eval_rings)
        else:
            f = m = s = float("nan")
        trace.steps.append(step)
        trace.loss.append(loss_value)
        trace.frc_scalar.append(f)
        trace.mse.append(m)
        trace.ssim.append(s)

    log(0, float("nan"))
    optimizer = Adam(model, cfg.learning_rate, betas=cfg.adam_betas)

    work: dict = {}
    inputs = np.empty((cfg.batch_size, 1, cfg.crop_size, cfg.crop_size))
    targets = np.empty_like(inputs)
    upstream = np.empty_like(inputs)
    for step in range(1, cfg.steps + 1):
        for b in range(cfg.batch_size):
            img = images[int(rng.integers(len(images)))]
            crop = random_crop(img, cfg.crop_size, rng)
            seed_a, seed_b = (int(s) for s in rng.integers(2**63, size=2))
            while seed_b == seed_a:
                seed_b = int(rng.integers(2**63))
            inputs[b, 0], targets[b, 0] = noise_pair(crop, cfg.noise, seed_a, seed_b)

        out, cache = _forward_batch(model, inputs, want_cache=True, work=work)
        batch_loss = 0.0
        for b in range(cfg.batch_size):
            value, grad = _loss_and_upstream(cfg.loss, out[b, 0], targets[b, 0], crop_rings)
            batch_loss += value
            upstream[b, 0] = grad
        batch_loss /= cfg.batch_size

        grads, _ = _backward_batch(model, cache, upstream, work=work)
        for gw, gb in grads:
            gw /= cfg.batch_size
            gb /= cfg.batch_size
        optimizer.step(model, grads)

        if step & (step - 1) == 0 or step == cfg.steps:
            log(step, batch_loss)

    return model, trace


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_ACT_CODES = {"relu": 0, "identity": 1}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


def save_model(path: str | Path, model: DenoiserModel) -> None:
    """Write the versioned binary checkpoint (float32 parameters)."""
    chunks = [MODEL_MAGIC, struct.pack("<II", MODEL_VERSION, len(model.layers))]
    for layer in model.layers:
        chunks.append(
            struct.pack("<III", layer.in_channels, layer.out_channels, _ACT_CODES[layer.activation])
        )
        chunks.append(layer.weights.astype("<f4").tobytes())
        chunks.append(layer.bias.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_model(path: str | Path) -> DenoiserModel:
    data = Path(path).read_bytes()
    if data[:4] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a denoiser checkpoint")
    version, n_layers = struct.unpack("<II", data[4:12])
    if version != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    layers = []
    for _ in range(n_layers):
        cin, cout, act = struct.unpack("<III", data[offset:offset + 12])
        offset += 12
        if act not in _ACT_NAMES:
            raise ValueError(f"{path}: unknown activation code {act}")
        n_w = cout * cin * 9
        weights = np.frombuffer(data, dtype="<f4", count=n_w, offset=offset)
        offset += 4 * n_w
        bias = np.frombuffer(data, dtype="<f4", count=cout, offset=offset)
        offset += 4 * cout
        layers.append(
            ConvLayer(
                weights=weights.astype(np.float64).reshape(cout, cin, 3, 3),
                bias=bias.astype(np.float64),
                activation=_ACT_NAMES[act],
            )
        )
    return DenoiserModel(layers)


# ---------------------------------------------------------------------------
# Estimator-style wrapper
# ---------------------------------------------------------------------------

class Denoiser:
    """Scikit-learn style front end: ``fit`` on clean images, ``transform`` noisy ones.

    Parameters mirror :class:`TrainConfig`; ``get_params``/``set_params``
    follow the sklearn convention so the object composes with pipelines and
    ``clone``. Fitted state lives in ``model_`` and ``trace_``.
    """

    _PARAM_NAMES = (
        "loss", "steps", "batch_size", "learning_rate", "crop_size",
        "noise_kind", "noise_level", "channels", "ring_thickness", "seed",
    )

    def __init__(
        self,
        loss: str = "frc",
        steps: int = 512,
        batch_size: int = 10,
        learning_rate: float = 3e-4,
        crop_size: int = 64,
        noise_kind: str = "gaussian",
        noise_level: float = 0.4,
        channels: int = 16,
        ring_thickness: int = 1,
        seed: int = 0,
    ):
        self.loss = loss
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.crop_size = crop_size
        self.noise_kind = noise_kind
        self.noise_level = noise_level
        self.channels = channels
        self.ring_thickness = ring_thickness
        self.seed = seed

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._PARAM_NAMES}

    def set_params(self, **params) -> "Denoiser":
        for name, value in params.items():
            if name not in self._PARAM_NAMES:
                raise ValueError(f"invalid parameter {name!r} for Denoiser")
            setattr(self, name, value)
        return self

    def _config(self) -> TrainConfig:
        return TrainConfig(
            loss=self.loss,
            steps=self.steps,
            noise=CorruptionSpec(self.noise_kind, self.noise_level, seed=self.seed),
            crop_size=self.crop_size,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
            ring_thickness=self.ring_thickness,
            channels=self.channels,
        )

    def fit(self, X, y=None) -> "Denoiser":
        """Train on a list of clean 2D images (y is ignored; targets are
        generated as independent corruptions)."""
        images = [validate_image(img) for img in X]
        self.model_, self.trace_ = train(images, self._config(), eval_images=None)
        return self

    def transform(self, X):
        """Denoise a list of images (or a single 2D array)."""
        if not hasattr(self, "model_"):
            raise ValueError("this Denoiser instance is not fitted yet; call fit first")
        if isinstance(X, np.ndarray) and X.ndim == 2:
            return forward(self.model_, X)
        return [forward(self.model_, img) for img in X]

    def predict(self, X):
        return self.transform(X)

    def fit_transform(self, X, y=None):
        return self.fit(X, y).transform(X)
