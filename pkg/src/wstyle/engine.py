"""Image-optimization loop: content + distribution-matching style losses.

Minimizes L = alpha * sum_l w_l * Ls_l + (1 - alpha) * Lc over the pixels of
a generated image, where Ls_l is one of three pluggable style backends
(critic-estimated Wasserstein, Gram/MMD-quad, first-order BN statistics)
applied to a pretrained backbone's features. Also runs the style
representation mode: synthesize from noise against style loss only, using
the layers up to a chosen depth or the raw pixels themselves.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from . import distances
from .backbone import Backbone, extract_features, raw_pixel_features, STYLE_LAYERS
from .critic import (
    CriticConfig,
    CriticState,
    critic_update,
    critic_value_gap,
    sample_feature_batch,
    squash_features,
)

BACKENDS = ("wasserstein", "gram", "bn")

_DEFAULT_STYLE_LAYERS = tuple((name, 1.0 / len(STYLE_LAYERS)) for name in STYLE_LAYERS)

# Column order of the trace CSV; raw-pixel style loss is reported in the l1 slot.
_CSV_LAYER_SLOTS = ("conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class EngineNumericalError(RuntimeError):
    """Optimization aborted on a non-finite loss."""

    def __init__(self, step: int, components: dict[str, float]):
        self.step = step
        self.components = components
        breakdown = ", ".join(f"{k}={v}" for k, v in components.items())
        super().__init__(f"non-finite loss at step {step}: {breakdown}")


@dataclass
class TransferConfig:
    alpha: float = 0.85
    style_layers: tuple = _DEFAULT_STYLE_LAYERS
    content_layer: str = "conv4_1"
    backend: str = "wasserstein"
    image_lr: float = 2e-2
    steps: int = 500
    seed: int = 0
    snapshot_every: int = 50
    init_mode: str = "noise"
    critic: CriticConfig = field(default_factory=CriticConfig)

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.snapshot_every < 1:
            raise ConfigError("snapshot_every must be >= 1")
        if self.init_mode not in ("content", "noise"):
            raise ConfigError(f"init_mode must be 'content' or 'noise', got {self.init_mode!r}")
        for name, w in self.style_layers:
            if name not in STYLE_LAYERS:
                raise ConfigError(f"unknown style layer {name!r}")
            if w < 0:
                raise ConfigError(f"style layer weight for {name} must be >= 0")
        if self.alpha > 0 and sum(w for _, w in self.style_layers) <= 0:
            raise ConfigError("style layer weights must sum to > 0 when alpha > 0")
        if self.content_layer not in STYLE_LAYERS:
            raise ConfigError(f"content layer {self.content_layer!r} is not canonical")
        try:
            self.critic.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def as_flat_dict(self) -> dict[str, str]:
        d = {
            "alpha": self.alpha,
            "style_layers": ",".join(f"{n}:{w}" for n, w in self.style_layers),
            "content_layer": self.content_layer,
            "backend": self.backend,
            "image_lr": self.image_lr,
            "steps": self.steps,
            "seed": self.seed,
            "snapshot_every": self.snapshot_every,
            "init_mode": self.init_mode,
            "lambda_gp": self.critic.lambda_gp,
            "critic_lr": self.critic.critic_lr,
            "critic_batch": self.critic.batch_size,
            "n_critic": self.critic.n_critic,
        }
        return {k: str(v) for k, v in d.items()}


@dataclass
class StepRecord:
    step: int
    total: float
    content: float
    style: dict[str, float]
    critic_gap: dict[str, float]
    gradient_penalty: dict[str, float]
    wall_clock: float


class LossTrace:
    """Per-step loss records with a fixed-schema CSV export."""

    def __init__(self):
        self.records: list[StepRecord] = []

    def append(self, record: StepRecord) -> None:
        self.records.append(record)

    @staticmethod
    def _slot(layer: str) -> str:
        return "conv1_1" if layer == "raw_pixels" else layer

    def to_csv(self, path) -> None:
        header = (
            ["step", "total", "content"]
            + [f"style_l{k}" for k in range(1, 6)]
            + [f"critic_gap_l{k}" for k in range(1, 6)]
            + [f"gp_l{k}" for k in range(1, 6)]
        )
        lines = [",".join(header)]
        for r in self.records:
            style = {self._slot(k): v for k, v in r.style.items()}
            gap = {self._slot(k): v for k, v in r.critic_gap.items()}
            gp = {self._slot(k): v for k, v in r.gradient_penalty.items()}
            row = [str(r.step), repr(r.total), repr(r.content)]
            for d in (style, gap, gp):
                row += [repr(d.get(slot, 0.0)) for slot in _CSV_LAYER_SLOTS]
            lines.append(",".join(row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def style_layer_loss(backend: str, F: torch.Tensor, S: torch.Tensor, critic: CriticState | None = None) -> torch.Tensor:
    """Dispatch the per-layer style loss; differentiable w.r.t. F."""
    if backend == "wasserstein":
        if critic is None:
            raise ConfigError("wasserstein backend requires a critic for each style layer")
        return critic_value_gap(critic, squash_features(S).detach(), squash_features(F))
    if critic is not None:
        raise ConfigError(f"backend {backend!r} does not take a critic")
    if backend == "gram":
        return distances.gram_style_loss(F, S)
    if backend == "bn":
        return distances.bn_matching_loss(F, S)
    raise ConfigError(f"unknown backend {backend!r}")


def total_loss(cfg: TransferConfig, feats_x, feats_c, feats_s, critics=None):
    """Combined loss alpha * sum w_l Ls_l + (1 - alpha) * Lc, with components.

    `feats_*` map layer name -> feature tensor. `feats_c` may be None when
    alpha == 1 (no content term).
    """
    critics = critics or {}
    style_terms: dict[str, torch.Tensor] = {}
    style_sum = None
    for name, w in cfg.style_layers:
        if name not in feats_x or name not in feats_s:
            raise ConfigError(f"missing features for style layer {name}")
        term = style_layer_loss(cfg.backend, feats_x[name], feats_s[name], critics.get(name))
        style_terms[name] = term
        weighted = w * term
        style_sum = weighted if style_sum is None else style_sum + weighted
    if cfg.alpha < 1.0:
        if feats_c is None or cfg.content_layer not in feats_c or cfg.content_layer not in feats_x:
            raise ConfigError(f"missing features for content layer {cfg.content_layer}")
        l_c = distances.content_loss(feats_x[cfg.content_layer], feats_c[cfg.content_layer])
    else:
        l_c = torch.zeros(())
    if cfg.alpha == 0.0:
        total = l_c
    elif cfg.alpha == 1.0:
        total = style_sum
    else:
        total = cfg.alpha * style_sum + (1.0 - cfg.alpha) * l_c
    return total, {"content": l_c, "style": style_terms}


def _to_image_tensor(img) -> torch.Tensor:
    t = torch.as_tensor(np.asarray(img), dtype=torch.float32)
    return t.clone()


def _save_png(x: torch.Tensor, path) -> None:
    from PIL import Image

    arr = (x.detach().clamp(0, 1).numpy() * 255.0).round().astype(np.uint8)
    Image.fromarray(arr).save(path)


def _write_config_echo(cfg: TransferConfig, out_dir, extra: dict[str, str] | None = None) -> None:
    items = cfg.as_flat_dict()
    if extra:
        items.update(extra)
    with open(out_dir / "config.txt", "w") as fh:
        for k, v in items.items():
            fh.write(f"{k} = {v}\n")


def _optimize(cfg, x, extract_fn, style_feats, content_feats, out_dir):
    """Shared optimization loop for transfer and style-representation runs."""
    critics: dict[str, CriticState] = {}
    if cfg.backend == "wasserstein":
        for i, (name, _) in enumerate(cfg.style_layers):
            in_dim = style_feats[name].shape[0]
            critics[name] = CriticState(
                in_dim, name, lr=cfg.critic.critic_lr, seed=cfg.seed + 1000 + i
            )
    squashed_style = {
        name: squash_features(style_feats[name]).detach() for name in style_feats
    }
    optimizer = torch.optim.Adam([x], lr=cfg.image_lr)
    trace = LossTrace()
    for step in range(1, cfg.steps + 1):
        t0 = time.perf_counter()
        feats_x = extract_fn(x)
        gap_rec: dict[str, float] = {}
        gp_rec: dict[str, float] = {}
        if cfg.backend == "wasserstein":
            for name, _ in cfg.style_layers:
                state = critics[name]
                fake_pool = squash_features(feats_x[name].detach())
                for _ in range(cfg.critic.n_critic):
                    real = sample_feature_batch(
                        squashed_style[name], cfg.critic.batch_size, state.generator
                    )
                    fake = sample_feature_batch(
                        fake_pool, cfg.critic.batch_size, state.generator
                    )
                    rec = critic_update(state, cfg.critic, real, fake)
                gap_rec[name] = rec["gap"]
                gp_rec[name] = rec["penalty"]
        total, comps = total_loss(cfg, feats_x, content_feats, style_feats, critics)
        style_vals = {k: float(v.detach()) for k, v in comps["style"].items()}
        components = {"total": float(total.detach()), "content": float(comps["content"].detach())}
        components.update({f"style_{k}": v for k, v in style_vals.items()})
        if not all(np.isfinite(v) for v in components.values()):
            if out_dir is not None:
                trace.to_csv(out_dir / "trace.csv")
            raise EngineNumericalError(step, components)
        optimizer.zero_grad(set_to_none=True)
        total.backward()
        optimizer.step()
        with torch.no_grad():
            x.clamp_(0.0, 1.0)
        trace.append(
            StepRecord(
                step=step,
                total=components["total"],
                content=components["content"],
                style=style_vals,
                critic_gap=gap_rec,
                gradient_penalty=gp_rec,
                wall_clock=time.perf_counter() - t0,
            )
        )
        if out_dir is not None and step % cfg.snapshot_every == 0:
            _save_png(x, out_dir / f"step_{step}.png")
    if out_dir is not None:
        _save_png(x, out_dir / "final.png")
        trace.to_csv(out_dir / "trace.csv")
    return x.detach(), trace


def run_transfer(cfg: TransferConfig, content_img, style_img, backbone: Backbone, out_dir=None):
    """Optimize a generated image against content + style losses.

    Returns (final image tensor H x W x 3 in [0, 1], LossTrace). When
    `out_dir` is given, snapshots, the final image, the trace CSV, and a
    config echo are written there.
    """
    cfg.validate()
    torch.manual_seed(cfg.seed)
    content = _to_image_tensor(content_img)
    style = _to_image_tensor(style_img)
    layer_names = [name for name, _ in cfg.style_layers]
    needed = list(dict.fromkeys(layer_names + [cfg.content_layer]))
    style_feats = {
        name: fm.values.detach()
        for name, fm in extract_features(backbone, style, layer_names).items()
    }
    content_feats = {
        name: fm.values.detach()
        for name, fm in extract_features(backbone, content, [cfg.content_layer]).items()
    }
    if cfg.init_mode == "content":
        x = content.clone().requires_grad_(True)
    else:
        gen = torch.Generator().manual_seed(cfg.seed)
        x = torch.rand(content.shape, generator=gen).requires_grad_(True)

    def extract_fn(img):
        fms = extract_features(backbone, img, needed)
        return {name: fm.values for name, fm in fms.items()}

    if out_dir is not None:
        _write_config_echo(cfg, out_dir, {"mode": "transfer"})
    return _optimize(cfg, x, extract_fn, style_feats, content_feats, out_dir)


def run_style_representation(cfg: TransferConfig, style_img, backbone: Backbone, max_layer, out_dir=None):
    """Synthesize a style representation: optimize noise against style loss only.

    `max_layer` is 1..5 (use layers conv1_1..conv<k>_1) or "raw_pixels".
    Requires alpha == 1 and init_mode == "noise".
    """
    if cfg.alpha != 1.0:
        raise ConfigError("style representation requires alpha == 1 (no content term)")
    if cfg.init_mode != "noise":
        raise ConfigError("style representation requires init_mode == 'noise'")
    if max_layer == "raw_pixels":
        # Validate everything but the layer list, which is not a CNN layer here.
        replace(cfg, style_layers=_DEFAULT_STYLE_LAYERS).validate()
        cfg = replace(cfg, style_layers=(("raw_pixels", 1.0),))
    elif isinstance(max_layer, int) and 1 <= max_layer <= 5:
        layers = [(STYLE_LAYERS[i], 1.0 / max_layer) for i in range(max_layer)]
        cfg = replace(cfg, style_layers=tuple(layers))
        cfg.validate()
    else:
        raise ConfigError(f"max_layer must be 1..5 or 'raw_pixels', got {max_layer!r}")
    torch.manual_seed(cfg.seed)
    style = _to_image_tensor(style_img)
    if max_layer == "raw_pixels":
        style_feats = {"raw_pixels": raw_pixel_features(style).values.detach()}

        def extract_fn(img):
            return {"raw_pixels": raw_pixel_features(img).values}

    else:
        layer_names = [name for name, _ in layers]
        style_feats = {
            name: fm.values.detach()
            for name, fm in extract_features(backbone, style, layer_names).items()
        }

        def extract_fn(img):
            fms = extract_features(backbone, img, layer_names)
            return {name: fm.values for name, fm in fms.items()}

    gen = torch.Generator().manual_seed(cfg.seed)
    x = torch.rand(style.shape, generator=gen).requires_grad_(True)
    if out_dir is not None:
        _write_config_echo(cfg, out_dir, {"mode": "style-repr", "max_layer": str(max_layer)})
    return _optimize(cfg, x, extract_fn, style_feats, None, out_dir)
