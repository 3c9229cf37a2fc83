"""Command-line front end: reproducible, file-driven experiments emitting CSV.

Every run resolves its configuration (defaults < config file < flags), writes
its artifacts under the output location, and records the resolved config in a
``run.json-lines`` manifest there. ``frc-kit rerun <manifest>`` replays a
recorded run; outputs are byte-identical. Exit codes: 0 success, 2 bad
usage/config/input, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .corrupt import CorruptionSpec, corrupt
from .denoise import TrainConfig, init_model, load_model, save_model, train, write_trace_csv
from .frc import average_curves, frc, frc_loss, frc_loss_grad, write_frc_csv
from .image import SyntheticImageSpec, apply_window, generate_synthetic, load_image, save_image
from .metrics import compute_report, pearson
from .spectral import build_rings

MANIFEST_NAME = "run.json-lines"

_REQUIRED = object()

# command schemas: key -> (type, default, help); type in {str,int,float,bool}
_SCHEMAS: dict[str, dict[str, tuple[type, object, str]]] = {
    "frc": {
        "a": (str, _REQUIRED, "first image or directory"),
        "b": (str, _REQUIRED, "second image or directory (paired by sorted name)"),
        "out": (str, "frc.csv", "output CSV path"),
        "thickness": (int, 1, "ring thickness"),
        "window": (str, "hann", "pre-FFT window: hann or none"),
        "fnorm": (bool, False, "append Nyquist-normalized frequency column"),
    },
    "metrics": {
        "a": (str, "", "first image or directory"),
        "b": (str, "", "second image or directory"),
        "out": (str, "metrics.csv", "output CSV path"),
        "peak": (float, 1.0, "peak signal value for PSNR"),
        "window": (str, "hann", "window for the FRC column"),
        "thickness": (int, 1, "ring thickness"),
        "pearson": (str, "", "CSV with metric_value,score columns; prints the coefficient"),
    },
    "corrupt": {
        "input": (str, _REQUIRED, "clean input image"),
        "out_dir": (str, _REQUIRED, "output directory"),
        "kind": (str, "gaussian", "corruption kind"),
        "level": (float, 0.4, "corruption level"),
        "seed": (int, 0, "corruption seed"),
    },
    "synth": {
        "out": (str, _REQUIRED, "output image path (.fimg or .pgm)"),
        "size": (int, 128, "image size"),
        "exponent": (float, 1.0, "amplitude spectrum decay exponent"),
        "seed": (int, 0, "generator seed"),
    },
    "train": {
        "data": (str, _REQUIRED, "directory of clean training images"),
        "out_dir": (str, _REQUIRED, "output directory"),
        "eval_data": (str, "", "directory of held-out clean images"),
        "loss": (str, "frc", "training loss: l1, l2 or frc"),
        "steps": (int, 512, "number of optimization steps"),
        "batch_size": (int, 10, "crops per step"),
        "learning_rate": (float, 3e-4, "Adam learning rate"),
        "crop_size": (int, 64, "training crop size"),
        "noise_kind": (str, "gaussian", "corruption kind"),
        "noise_level": (float, 0.4, "corruption level"),
        "thickness": (int, 1, "ring thickness for the frc loss"),
        "channels": (int, 16, "hidden channels"),
        "seed": (int, 0, "training seed"),
    },
    "sweep": {
        "data": (str, _REQUIRED, "directory of square, equally sized images"),
        "out_dir": (str, _REQUIRED, "output directory"),
        "thickness": (int, 1, "ring thickness"),
    },
    "average": {
        "model": (str, _REQUIRED, "denoiser checkpoint"),
        "clean": (str, _REQUIRED, "clean reference image"),
        "out_dir": (str, _REQUIRED, "output directory"),
        "kind": (str, "gaussian", "corruption kind"),
        "level": (float, 0.4, "corruption level"),
        "seed": (int, 0, "base noise seed"),
        "n": (int, 200, "number of noise realizations"),
        "window": (str, "hann", "evaluation window"),
    },
    "gradcheck": {
        "size": (int, 16, "test image size"),
        "seed": (int, 3, "test seed"),
        "step": (float, 1e-4, "finite-difference step"),
    },
}

_INPUT_PATH_KEYS = {
    "frc": ["a", "b"],
    "metrics": [],
    "corrupt": ["input"],
    "synth": [],
    "train": ["data"],
    "sweep": ["data"],
    "average": ["model", "clean"],
    "gradcheck": [],
}

IMAGE_SUFFIXES = (".pgm", ".fimg")


class UsageError(Exception):
    """Bad arguments, config or input files: exit code 2."""


def _parse_value(key: str, text: str, target: type):
    if target is bool:
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"bad boolean for key '{key}': {text!r}")
    try:
        return target(text)
    except ValueError:
        raise UsageError(f"bad value for key '{key}': {text!r}") from None


def _read_config_file(path: str, schema) -> dict:
    cfg_path = Path(path)
    if not cfg_path.is_file():
        raise UsageError(f"config file not found: {cfg_path}")
    values = {}
    for raw in cfg_path.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"bad config line (expected key=value): {raw!r}")
        key, _, text = line.partition("=")
        key = key.strip()
        if key not in schema:
            raise UsageError(f"unknown config key '{key}'")
        values[key] = _parse_value(key, text.strip(), schema[key][0])
    return values


def _resolve_config(command: str, flag_values: dict, config_file: str | None) -> dict:
    schema = _SCHEMAS[command]
    resolved = {key: default for key, (_, default, _) in schema.items()}
    if config_file:
        resolved.update(_read_config_file(config_file, schema))
    for key, value in flag_values.items():
        if value is not None:
            resolved[key] = value
    if "seed" in schema and resolved["seed"] == schema["seed"][1]:
        env_seed = os.environ.get("FRCKIT_SEED")
        if env_seed is not None:
            resolved["seed"] = _parse_value("seed", env_seed, int)
    missing = [k for k, v in resolved.items() if v is _REQUIRED]
    if missing:
        raise UsageError(f"missing required key(s): {', '.join(missing)}")
    for key in _INPUT_PATH_KEYS[command]:
        value = resolved[key]
        if value and not Path(value).exists():
            raise UsageError(f"path for key '{key}' does not exist: {value}")
    return resolved


def _write_manifest(out_dir: Path, command: str, config: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {"command": command, "config": config}
    (out_dir / MANIFEST_NAME).write_text(json.dumps(record, sort_keys=True) + "\n")


def _image_files(path: Path) -> list[Path]:
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise UsageError(f"no {'/'.join(IMAGE_SUFFIXES)} images in {path}")
    return files


def _collect_pairs(a: str, b: str) -> list[tuple[Path, Path]]:
    pa, pb = Path(a), Path(b)
    if pa.is_dir() != pb.is_dir():
        raise UsageError(f"inputs must both be files or both directories: {a}, {b}")
    if pa.is_dir():
        fa, fb = _image_files(pa), _image_files(pb)
        if len(fa) != len(fb):
            raise UsageError(f"directories hold {len(fa)} vs {len(fb)} images: {a}, {b}")
        return list(zip(fa, fb))
    return [(pa, pb)]


# ---------------------------------------------------------------------------
# command implementations
# ---------------------------------------------------------------------------

def _run_frc(cfg: dict) -> int:
    curves = []
    for file_a, file_b in _collect_pairs(cfg["a"], cfg["b"]):
        x = load_image(file_a)
        y = load_image(file_b)
        if x.shape != y.shape:
            raise UsageError(f"image sizes differ: {file_a} is {x.shape}, {file_b} is {y.shape}")
        rings = build_rings(*x.shape, cfg["thickness"])
        curves.append(frc(apply_window(x, cfg["window"]), apply_window(y, cfg["window"]), rings))
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_frc_csv(average_curves(curves), out, normalized_freq=cfg["fnorm"])
    _write_manifest(out.parent, "frc", cfg)
    return 0


def _run_metrics(cfg: dict) -> int:
    if cfg["pearson"]:
        path = Path(cfg["pearson"])
        if not path.is_file():
            raise UsageError(f"pearson CSV not found: {path}")
        lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
        if not lines:
            raise UsageError(f"empty CSV: {path}")
        header = [h.strip() for h in lines[0].split(",")]
        for column in ("metric_value", "score"):
            if column not in header:
                raise UsageError(f"CSV {path} is missing column '{column}'")
        i_val, i_score = header.index("metric_value"), header.index("score")
        vals, scores = [], []
        for ln in lines[1:]:
            parts = ln.split(",")
            vals.append(float(parts[i_val]))
            scores.append(float(parts[i_score]))
        print(f"{pearson(vals, scores)!r}")
        return 0

    if not cfg["a"] or not cfg["b"]:
        raise UsageError("metrics needs two inputs (or --pearson CSV)")
    for key in ("a", "b"):
        if not Path(cfg[key]).exists():
            raise UsageError(f"path for key '{key}' does not exist: {cfg[key]}")
    rows = []
    for file_a, file_b in _collect_pairs(cfg["a"], cfg["b"]):
        x = load_image(file_a)
        y = load_image(file_b)
        if x.shape != y.shape:
            raise UsageError(f"image sizes differ: {file_a} is {x.shape}, {file_b} is {y.shape}")
        rings = build_rings(*x.shape, cfg["thickness"])
        report = compute_report(x, y, peak=cfg["peak"], rings=rings, window=cfg["window"])
        psnr_text = "inf" if math.isinf(report.psnr) else repr(report.psnr)
        rows.append(f"{file_a.name},{report.mse!r},{psnr_text},{report.ssim!r},{report.frc_scalar!r}")
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(["image,mse,psnr,ssim,frc_scalar"] + rows) + "\n")
    _write_manifest(out.parent, "metrics", cfg)
    return 0


def _run_corrupt(cfg: dict) -> int:
    img = load_image(cfg["input"])
    spec = CorruptionSpec(cfg["kind"], cfg["level"], cfg["seed"])
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    save_image(out_dir / "corrupted.fimg", corrupt(img, spec))
    _write_manifest(out_dir, "corrupt", cfg)
    return 0


def _run_synth(cfg: dict) -> int:
    spec = SyntheticImageSpec(size=cfg["size"], spectral_exponent=cfg["exponent"], seed=cfg["seed"])
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_image(out, generate_synthetic(spec))
    _write_manifest(out.parent, "synth", cfg)
    return 0


def _run_train(cfg: dict) -> int:
    images = [load_image(p) for p in _image_files(Path(cfg["data"]))]
    eval_images = None
    if cfg["eval_data"]:
        eval_dir = Path(cfg["eval_data"])
        if not eval_dir.is_dir():
            raise UsageError(f"path for key 'eval_data' does not exist: {eval_dir}")
        eval_images = [load_image(p) for p in _image_files(eval_dir)]
    train_cfg = TrainConfig(
        loss=cfg["loss"],
        steps=cfg["steps"],
        noise=CorruptionSpec(cfg["noise_kind"], cfg["noise_level"], seed=cfg["seed"]),
        crop_size=cfg["crop_size"],
        batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"],
        seed=cfg["seed"],
        ring_thickness=cfg["thickness"],
        channels=cfg["channels"],
    )
    model, trace = train(images, train_cfg, eval_images=eval_images)
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    save_model(out_dir / "model.fdnm", model)
    write_trace_csv(trace, out_dir / "trace.csv")
    _write_manifest(out_dir, "train", cfg)
    return 0


def _run_sweep(cfg: dict) -> int:
    images = [load_image(p) for p in _image_files(Path(cfg["data"]))]
    table = experiments.lowpass_sensitivity_sweep(images, thickness=cfg["thickness"])
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    experiments.write_sweep_csv(table, out_dir / "sweep.csv")
    _write_manifest(out_dir, "sweep", cfg)
    return 0


def _run_average(cfg: dict) -> int:
    model = load_model(cfg["model"])
    clean = load_image(cfg["clean"])
    noise = CorruptionSpec(cfg["kind"], cfg["level"], cfg["seed"])
    result = experiments.denoise_average_experiment(
        model, clean, noise, cfg["n"], window=cfg["window"]
    )
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in ("single_noisy", "single_denoised", "averaged_noisy", "averaged_denoised"):
        write_frc_csv(getattr(result, name), out_dir / f"{name}.csv")
    save_image(out_dir / "bias.fimg", result.bias)
    _write_manifest(out_dir, "average", cfg)
    return 0


def _run_gradcheck(cfg: dict) -> int:
    size, h = cfg["size"], cfg["step"]
    rng = np.random.default_rng(cfg["seed"])
    x = rng.uniform(-0.5, 0.5, (size, size))
    y = rng.uniform(-0.5, 0.5, (size, size))
    rings = build_rings(size, size)
    analytic = frc_loss_grad(x, y, rings)

    worst = 0.0
    for i in range(size):
        for j in range(size):
            x[i, j] += h
            plus = frc_loss(x, y, rings).loss
            x[i, j] -= 2 * h
            minus = frc_loss(x, y, rings).loss
            x[i, j] += h
            fd = (plus - minus) / (2 * h)
            err = abs(analytic[i, j] - fd) / max(abs(fd), 1e-8)
            worst = max(worst, err)
    print(f"max relative error: {worst:.3e}")
    return 0 if worst < 1e-4 else 1


_RUNNERS = {
    "frc": _run_frc,
    "metrics": _run_metrics,
    "corrupt": _run_corrupt,
    "synth": _run_synth,
    "train": _run_train,
    "sweep": _run_sweep,
    "average": _run_average,
    "gradcheck": _run_gradcheck,
}

_OUT_KEYS = ("out_dir", "out")


def _run_rerun(manifest_path: str, out_override: str | None) -> int:
    path = Path(manifest_path)
    if not path.is_file():
        raise UsageError(f"manifest not found: {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise UsageError(f"empty manifest: {path}")
    try:
        record = json.loads(lines[-1])
        command = record["command"]
        config = record["config"]
    except (json.JSONDecodeError, KeyError, TypeError):
        raise UsageError(f"malformed manifest: {path}") from None
    if command not in _RUNNERS:
        raise UsageError(f"manifest names unknown command '{command}'")
    schema = _SCHEMAS[command]
    unknown = set(config) - set(schema)
    if unknown:
        raise UsageError(f"unknown config key '{sorted(unknown)[0]}' in manifest")
    if out_override:
        for key in _OUT_KEYS:
            if key in config:
                config[key] = out_override
                break
    return _RUNNERS[command](config)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frc-kit",
        description="Frequency-ring correlation toolkit: metrics, losses, denoising experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, schema in _SCHEMAS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", help="key=value config file; flags override it")
        positionals = ("a", "b") if command in ("frc", "metrics") else ()
        for key in positionals:
            p.add_argument(key, nargs="?", default=None, help=schema[key][2])
        for key, (target, default, help_text) in schema.items():
            if key in positionals:
                continue
            flag = "--" + key.replace("_", "-")
            if key == "out":
                p.add_argument("-o", flag, dest=key, help=help_text)
            elif target is bool:
                p.add_argument(flag, dest=key, action="store_const", const=True, help=help_text)
            else:
                p.add_argument(flag, dest=key, type=target, help=help_text)
        if "window" in schema:
            p.add_argument(
                "--no-window", dest="window", action="store_const", const="none",
                help="disable the Hann window",
            )
    rerun = sub.add_parser("rerun", help="replay a recorded run from its manifest")
    rerun.add_argument("manifest")
    rerun.add_argument("-o", "--out", help="redirect outputs")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    try:
        if args.command == "rerun":
            return _run_rerun(args.manifest, args.out)
        schema = _SCHEMAS[args.command]
        flags = {key: getattr(args, key, None) for key in schema}
        config = _resolve_config(args.command, flags, args.config)
        return _RUNNERS[args.command](config)
    except (UsageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
