"""Command-line entry point.

Modes:
  transfer      style + content -> stylized image
  style-repr    style only -> style representation at a given layer depth
  compare       run all three backends with a shared seed, emit a grid
  oracle-check  exact W1 / MMD-quad / BN-stats report for two CSV clouds

Config precedence: CLI flags > config file (flat ``key = value`` lines) >
built-in defaults. Exit codes: 0 success, 2 usage error, 3 numerical abort.
No numerical logic lives here; everything is delegated to the engine,
distances, and transport modules.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import distances, transport
from .backbone import load_backbone
from .critic import CriticConfig, CriticNumericalError
from .engine import (
    BACKENDS,
    EngineNumericalError,
    STYLE_LAYERS,
    TransferConfig,
    run_style_representation,
    run_transfer,
)

EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    run_id: str
    mode: str
    config: TransferConfig
    inputs: dict[str, str]
    out_dir: Path
    size: int
    layers: object  # int 1..5 or "raw"


_CONFIG_KEYS = {
    "alpha": float,
    "steps": int,
    "backend": str,
    "layers": str,
    "image_lr": float,
    "critic_lr": float,
    "critic_batch": int,
    "lambda_gp": float,
    "n_critic": int,
    "size": int,
    "seed": int,
    "snapshot_every": int,
    "style": str,
    "content": str,
    "weights": str,
    "out": str,
}


def _read_config_file(path: str) -> dict:
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](raw)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {raw!r}") from exc
    return values


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="wstyle",
        description="Style transfer with pluggable distribution-distance style losses.",
    )
    p.add_argument("--mode", choices=["transfer", "style-repr", "compare", "oracle-check"],
                   required=True)
    p.add_argument("--style", help="style image (PNG/JPEG)")
    p.add_argument("--content", help="content image (PNG/JPEG)")
    p.add_argument("--weights", help="VGG19-BN checkpoint path")
    p.add_argument("--alpha", type=float, help="style/content mixing weight in [0,1]")
    p.add_argument("--steps", type=int)
    p.add_argument("--backend", choices=["wasserstein", "gram", "bn"])
    p.add_argument("--layers", help="max style layer depth 1..5, or 'raw' for raw pixels")
    p.add_argument("--image-lr", type=float, dest="image_lr")
    p.add_argument("--critic-lr", type=float, dest="critic_lr")
    p.add_argument("--critic-batch", type=int, dest="critic_batch")
    p.add_argument("--lambda-gp", type=float, dest="lambda_gp")
    p.add_argument("--n-critic", type=int, dest="n_critic")
    p.add_argument("--size", type=int, help="working resolution (square), default 256")
    p.add_argument("--seed", type=int)
    p.add_argument("--snapshot-every", type=int, dest="snapshot_every")
    p.add_argument("--out", help="output root directory (also WST_OUT_DIR)")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--points-a", dest="points_a", help="CSV point cloud (oracle-check)")
    p.add_argument("--points-b", dest="points_b", help="CSV point cloud (oracle-check)")
    return p


def _resolve(flag_value, file_values: dict, key: str, default):
    if flag_value is not None:
        return flag_value
    if key in file_values:
        return file_values[key]
    return default


def parse_config(argv) -> RunManifest:
    """Resolve flags + optional config file into a run manifest."""
    args = _build_parser().parse_args(argv)
    file_values = _read_config_file(args.config) if args.config else {}

    def get(key, default):
        return _resolve(getattr(args, key, None), file_values, key, default)

    base = TransferConfig()
    critic = CriticConfig(
        lambda_gp=get("lambda_gp", base.critic.lambda_gp),
        critic_lr=get("critic_lr", base.critic.critic_lr),
        batch_size=get("critic_batch", base.critic.batch_size),
        n_critic=get("n_critic", base.critic.n_critic),
    )
    layers_raw = get("layers", None)
    layers: object = 5
    if layers_raw is not None:
        if str(layers_raw) == "raw":
            layers = "raw"
        else:
            try:
                layers = int(layers_raw)
            except ValueError:
                raise UsageError(f"--layers must be 1..5 or 'raw', got {layers_raw!r}")
            if not 1 <= layers <= 5:
                raise UsageError(f"--layers must be 1..5, got {layers}")
    n_layers = 5 if layers == "raw" else layers
    style_layers = tuple((STYLE_LAYERS[i], 1.0 / n_layers) for i in range(n_layers))
    alpha = get("alpha", base.alpha)
    if not 0.0 <= alpha <= 1.0:
        raise UsageError(f"alpha must be in [0, 1], got {alpha}")
    backend = get("backend", base.backend)
    if backend not in BACKENDS:
        raise UsageError(f"backend must be one of {BACKENDS}, got {backend!r}")
    cfg = TransferConfig(
        alpha=alpha,
        style_layers=style_layers,
        backend=backend,
        image_lr=get("image_lr", base.image_lr),
        steps=get("steps", base.steps),
        seed=get("seed", base.seed),
        snapshot_every=get("snapshot_every", base.snapshot_every),
        critic=critic,
    )

    mode = args.mode
    inputs = {}
    for key in ("style", "content", "weights"):
        val = get(key, None)
        if val is not None:
            inputs[key] = val
    if args.points_a:
        inputs["points_a"] = args.points_a
    if args.points_b:
        inputs["points_b"] = args.points_b

    required = {
        "transfer": ("style", "content", "weights"),
        "style-repr": ("style",),
        "compare": ("style",),
        "oracle-check": ("points_a", "points_b"),
    }[mode]
    for key in required:
        if key not in inputs:
            raise UsageError(f"mode {mode} requires --{key.replace('_', '-')}")
    if mode in ("style-repr", "compare") and layers != "raw" and "weights" not in inputs:
        raise UsageError(f"mode {mode} requires --weights")
    for key, val in inputs.items():
        if not Path(val).is_file():
            raise UsageError(f"--{key.replace('_', '-')}: file not found: {val}")

    out_root = Path(get("out", None) or os.environ.get("WST_OUT_DIR") or "out")
    run_id = f"{mode}-{time.strftime('%Y%m%d-%H%M%S')}-{os.getpid()}"
    return RunManifest(
        run_id=run_id,
        mode=mode,
        config=cfg,
        inputs=inputs,
        out_dir=out_root / run_id,
        size=get("size", 256),
        layers=layers,
    )


def load_image(path, size: int) -> np.ndarray:
    """Load as RGB, resize short side to `size`, center-crop to size x size."""
    from PIL import Image

    with Image.open(path) as im:
        im = im.convert("RGB")
        w, h = im.size
        scale = size / min(w, h)
        im = im.resize((max(size, round(w * scale)), max(size, round(h * scale))),
                       Image.BILINEAR)
        w, h = im.size
        left, top = (w - size) // 2, (h - size) // 2
        im = im.crop((left, top, left + size, top + size))
        return np.asarray(im, dtype=np.float32) / 255.0


def _write_manifest(manifest: RunManifest) -> None:
    manifest.out_dir.mkdir(parents=True, exist_ok=True)
    lines = [
        f"run_id = {manifest.run_id}",
        f"mode = {manifest.mode}",
        f"out_dir = {manifest.out_dir}",
        f"size = {manifest.size}",
        f"layers = {manifest.layers}",
    ]
    lines += [f"input_{k} = {v}" for k, v in sorted(manifest.inputs.items())]
    lines += [f"{k} = {v}" for k, v in manifest.config.as_flat_dict().items()]
    (manifest.out_dir / "manifest.txt").write_text("\n".join(lines) + "\n")


def _read_points_csv(path: str) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise UsageError(
                    f"{path}:{lineno}: ragged row ({len(row)} columns, expected {width})"
                )
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise UsageError(f"{path}:{lineno}: non-numeric cell: {exc}") from exc
    if not rows:
        raise UsageError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64)


def _run_oracle_check(manifest: RunManifest) -> None:
    a = _read_points_csv(manifest.inputs["points_a"])
    b = _read_points_csv(manifest.inputs["points_b"])
    if a.shape[1] != b.shape[1]:
        raise UsageError(
            f"point clouds have different dimensions: {a.shape[1]} vs {b.shape[1]}"
        )
    w1 = transport.exact_w1(a, b)
    mmd2 = float(distances.mmd2_quad(a.T, b.T))
    bn_gap = float(distances.bn_matching_loss(a.T, b.T))
    print(f"exact_w1     = {w1:.12g}")
    print(f"mmd2_quad    = {mmd2:.12g}")
    print(f"bn_stats_gap = {bn_gap:.12g}")


def _grid_image(cells, labels_rows, labels_cols):
    """Assemble a labeled grid PNG from equal-size image arrays (rows of cells)."""
    from PIL import Image, ImageDraw

    cell_h, cell_w = cells[0][0].shape[0], cells[0][0].shape[1]
    margin = 24
    n_rows, n_cols = len(cells), len(cells[0])
    canvas = Image.new(
        "RGB", (margin * 3 + n_cols * cell_w, margin + n_rows * (cell_h + margin)), "white"
    )
    draw = ImageDraw.Draw(canvas)
    for i, row in enumerate(cells):
        y = margin + i * (cell_h + margin)
        draw.text((2, y + cell_h // 2), labels_rows[i], fill="black")
        for j, cell in enumerate(row):
            arr = (np.clip(cell, 0, 1) * 255).round().astype(np.uint8)
            canvas.paste(Image.fromarray(arr), (margin * 3 + j * cell_w, y))
    for j, label in enumerate(labels_cols):
        draw.text((margin * 3 + j * cell_w, 2), label, fill="black")
    return canvas


def _run_compare(manifest: RunManifest) -> None:
    style = load_image(manifest.inputs["style"], manifest.size)
    backbone = None
    if "weights" in manifest.inputs:
        backbone = load_backbone(manifest.inputs["weights"])
    is_transfer = "content" in manifest.inputs
    rows = []
    if is_transfer:
        content = load_image(manifest.inputs["content"], manifest.size)
        cols = ["output"]
        for backend in BACKENDS:
            cfg = replace(manifest.config, backend=backend)
            sub = manifest.out_dir / backend
            sub.mkdir(parents=True, exist_ok=True)
            final, _ = run_transfer(cfg, content, style, backbone, out_dir=sub)
            rows.append([final.numpy()])
    else:
        depths: list = ["raw_pixels"] + list(range(1, 6))
        cols = ["Raw Pixels"] + [f"Layer {k}" for k in range(1, 6)]
        for backend in BACKENDS:
            cfg = replace(
                manifest.config, backend=backend, alpha=1.0, init_mode="noise"
            )
            row = []
            for depth in depths:
                tag = "raw" if depth == "raw_pixels" else f"layer{depth}"
                sub = manifest.out_dir / f"{backend}_{tag}"
                sub.mkdir(parents=True, exist_ok=True)
                final, _ = run_style_representation(
                    cfg, style, backbone, depth, out_dir=sub
                )
                row.append(final.numpy())
            rows.append(row)
    grid = _grid_image(rows, list(BACKENDS), cols)
    grid.save(manifest.out_dir / "grid.png")
    print(f"wrote {manifest.out_dir / 'grid.png'}")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        manifest = parse_config(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if manifest.mode == "oracle-check":
            try:
                _run_oracle_check(manifest)
            except UsageError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_USAGE
            return 0
        _write_manifest(manifest)
        if manifest.mode == "transfer":
            backbone = load_backbone(manifest.inputs["weights"])
            style = load_image(manifest.inputs["style"], manifest.size)
            content = load_image(manifest.inputs["content"], manifest.size)
            run_transfer(manifest.config, content, style, backbone, out_dir=manifest.out_dir)
            print(f"wrote {manifest.out_dir / 'final.png'}")
        elif manifest.mode == "style-repr":
            style = load_image(manifest.inputs["style"], manifest.size)
            backbone = None
            depth: object = "raw_pixels" if manifest.layers == "raw" else manifest.layers
            if depth != "raw_pixels":
                backbone = load_backbone(manifest.inputs["weights"])
            cfg = replace(manifest.config, alpha=1.0, init_mode="noise")
            run_style_representation(cfg, style, backbone, depth, out_dir=manifest.out_dir)
            print(f"wrote {manifest.out_dir / 'final.png'}")
        elif manifest.mode == "compare":
            _run_compare(manifest)
    except (EngineNumericalError, CriticNumericalError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
