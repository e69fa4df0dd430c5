"""Run configuration: dataclasses, JSON loading, dotted overrides, hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ValidationError(ValueError):
    """Bad user input: config, manifest, tiles or CLI arguments."""


@dataclass
class ViTConfig:
    patch_size: int = 8
    embed_dim: int = 32
    depth: int = 3
    heads: int = 2
    input_channels: int = 3
    tap_fractions: tuple[float, float, float] = (1 / 3, 2 / 3, 1.0)
    mlp_ratio: float = 2.0

    def tap_indices(self) -> list[int]:
        """1-based block indices ceil(f * depth) for each tap fraction."""
        # small epsilon keeps 1/3 * 3 from rounding up to 2
        return [max(1, math.ceil(f * self.depth - 1e-9)) for f in self.tap_fractions]

    def validate(self, image_size: tuple[int, int] | None = None) -> None:
        if self.patch_size < 1 or self.embed_dim < 1 or self.depth < 1:
            raise ValidationError("patch_size, embed_dim and depth must be positive")
        if self.embed_dim % self.heads:
            raise ValidationError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.input_channels not in (1, 3):
            raise ValidationError("input_channels must be 1 or 3")
        if len(self.tap_fractions) != 3:
            raise ValidationError("exactly three tap fractions are required")
        taps = self.tap_indices()
        if len(set(taps)) != 3 or taps != sorted(taps) or taps[-1] != self.depth:
            raise ValidationError(
                f"tap indices {taps} must be distinct, increasing and end at depth {self.depth}"
            )
        if image_size is not None:
            h, w = image_size
            if h % self.patch_size or w % self.patch_size:
                raise ValidationError(f"image size {image_size} not divisible by patch {self.patch_size}")


@dataclass
class TextConfig:
    embed_dim: int = 32
    depth: int = 1
    heads: int = 2
    max_len: int = 48


@dataclass
class CloudParams:
    """Synthetic cloud settings. alpha_max < 0 means "use the profile default"."""

    profile: str = "none"  # none | thin | thick | varied
    alpha_max: float = -1.0
    noise_octaves: int = 4
    noise_base_period: float = 16.0
    coverage: float = 0.5
    contrast: float = 3.0
    cloud_color: tuple[float, float, float] = (0.95, 0.95, 0.95)
    seed: int = 0

    def validate(self) -> None:
        if self.profile not in PROFILE_ALPHA:
            raise ValidationError(f"unknown cloud profile {self.profile!r}")
        if self.noise_octaves < 1:
            raise ValidationError("noise_octaves must be >= 1")
        if self.noise_base_period <= 0:
            raise ValidationError("noise_base_period must be positive")
        if not all(0.0 <= c <= 1.0 for c in self.cloud_color) or len(self.cloud_color) != 3:
            raise ValidationError("cloud_color must be 3 values in [0, 1]")
        if self.alpha_max >= 0:
            if self.alpha_max > 1:
                raise ValidationError("alpha_max must lie in [0, 1]")
            if self.profile == "thin" and self.alpha_max > 0.4:
                raise ValidationError("thin clouds require alpha_max <= 0.4")
            if self.profile == "thick" and self.alpha_max < 0.7:
                raise ValidationError("thick clouds require alpha_max >= 0.7")


# default alpha_max per profile; varied draws per sample from VARIED_ALPHA_RANGE
PROFILE_ALPHA = {"none": 0.0, "thin": 0.35, "thick": 1.0, "varied": None}
VARIED_ALPHA_RANGE = (0.2, 0.95)


@dataclass
class AugmentParams:
    enabled: bool = False
    translate: int = 0  # +- pixels
    hflip: bool = False
    vflip: bool = False
    scale: tuple[float, float] = (1.0, 1.0)
    rotation: float = 0.0  # +- degrees
    seed: int = 0

    def validate(self) -> None:
        lo, hi = self.scale
        if lo <= 0 or hi <= 0 or lo > hi:
            raise ValidationError(f"invalid scale range {self.scale}")
        if self.translate < 0 or self.rotation < 0:
            raise ValidationError("translate and rotation ranges must be non-negative")


LOSS_KINDS = ("infonce", "mse", "l1")
CMU_TARGETS = ("none", "dense", "global", "both")
FUSION_MODES = ("dual", "rgb_only")


@dataclass
class RunConfig:
    image_size: tuple[int, int] = (32, 32)
    dense: ViTConfig = field(default_factory=ViTConfig)
    global_encoder: ViTConfig = field(default_factory=lambda: ViTConfig(depth=3))
    text: TextConfig = field(default_factory=TextConfig)
    unified_dim: int = 32  # shared space for dense features, image and text embeddings
    decoder_dim: int = 16
    sar_init: str = "rgb_copy"  # rgb_copy: start from the RGB encoder weights | random
    fusion: str = "dual"
    temperature: float = 0.07
    cmu_loss: str = "infonce"
    cmu_target: str = "dense"
    # vocabulary
    seen_classes: list[str] = field(default_factory=lambda: ["Forest", "City", "Farmland"])
    novel_classes: list[str] = field(default_factory=lambda: ["Road", "Water"])
    prompt_template: str = "a photo of {}"
    ignore_index: int = 255
    # data
    cloud: CloudParams = field(default_factory=CloudParams)
    cloud_splits: list[str] = field(default_factory=lambda: ["train", "test"])
    augment: AugmentParams = field(default_factory=AugmentParams)
    # optimisation
    stage1_lr: float = 3e-4
    stage2_lr: float = 2.5e-4
    encoder_lr: float = 2e-6
    weight_decay: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 8
    stage1_iters: int = 400
    stage2_iters: int = 600
    seed: int = 0
    dtype: str = "float32"  # float64 for gradient checks and bit-exact replays
    init_scheme: str = "uniform_fan_in"

    def validate(self) -> "RunConfig":
        if self.temperature <= 0:
            raise ValidationError("temperature must be > 0")
        for name in ("stage1_lr", "stage2_lr", "encoder_lr"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be > 0")
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be >= 0")
        if self.cmu_loss not in LOSS_KINDS:
            raise ValidationError(f"cmu_loss must be one of {LOSS_KINDS}")
        if self.cmu_target not in CMU_TARGETS:
            raise ValidationError(f"cmu_target must be one of {CMU_TARGETS}")
        if self.fusion not in FUSION_MODES:
            raise ValidationError(f"fusion must be one of {FUSION_MODES}")
        if self.sar_init not in ("random", "rgb_copy"):
            raise ValidationError("sar_init must be 'random' or 'rgb_copy'")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.cmu_loss == "infonce" and self.batch_size < 2:
            raise ValidationError("infonce needs batch_size >= 2 for in-batch negatives")
        if self.stage1_iters < 0 or self.stage2_iters < 0:
            raise ValidationError("iteration counts must be >= 0")
        if self.dtype not in ("float32", "float64"):
            raise ValidationError("dtype must be float32 or float64")
        if self.prompt_template.count("{}") != 1:
            raise ValidationError("prompt_template needs exactly one '{}' placeholder")
        if not set(self.cloud_splits) <= {"train", "test"}:
            raise ValidationError("cloud_splits may only contain 'train' and 'test'")
        if self.unified_dim < 1 or self.decoder_dim < 1:
            raise ValidationError("unified_dim and decoder_dim must be positive")
        self.dense.validate(self.image_size)
        self.global_encoder.validate(self.image_size)
        self.cloud.validate()
        self.augment.validate()
        return self

    def to_dict(self) -> dict[str, Any]:
        return json.loads(json.dumps(dataclasses.asdict(self)))

    def model_hash(self) -> str:
        """Hash of the fields that determine parameter names and shapes."""
        d = self.to_dict()
        keys = ("image_size", "dense", "global_encoder", "text", "unified_dim", "decoder_dim",
                "fusion", "cmu_target", "seen_classes", "novel_classes", "prompt_template", "dtype")
        blob = json.dumps({k: d[k] for k in keys}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _build(cls, data: dict[str, Any], path: str = ""):
    if not isinstance(data, dict):
        raise ValidationError(f"{path or 'config'} must be a JSON object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ValidationError(f"unknown config key(s) {', '.join(path + k for k in unknown)}")
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        current = getattr(defaults, name)
        if dataclasses.is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{path}{name}.")
        elif isinstance(current, tuple):
            if not isinstance(value, (list, tuple)) or len(value) != len(current):
                raise ValidationError(f"{path}{name} must be a list of {len(current)} values")
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict[str, Any]) -> RunConfig:
    return _build(RunConfig, data).validate()


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> RunConfig:
    data: dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ValidationError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed config {path}: {exc}") from None
    for item in overrides or []:
        apply_override(data, item)
    return config_from_dict(data)


def apply_override(data: dict[str, Any], item: str) -> None:
    """Apply one ``key.sub=value`` override in place; value parsed as JSON when possible."""
    if "=" not in item:
        raise ValidationError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.strip().split(".")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ValidationError(f"override {key!r} descends into a non-object")
    node[parts[-1]] = value
