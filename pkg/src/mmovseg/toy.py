"""Procedural RGB/SAR/label scenes standing in for real paired benchmarks.

Scenes are blobby class layouts on a grid of ``cell_size`` pixel cells. RGB is
a per-class colour with a per-class stripe texture and pixel noise; SAR is a
per-class backscatter level plus a bright response on class boundaries, so it
depends on the label geometry only, never on the RGB.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ValidationError
from .data import PairedSample, save_paired_sample
from .vocab import DatasetManifest, ManifestEntry, save_manifest

# well separated in RGB; extra classes get seeded random colours
PALETTE = [
    (0.15, 0.45, 0.15),  # green
    (0.60, 0.60, 0.62),  # grey
    (0.80, 0.70, 0.30),  # ochre
    (0.25, 0.20, 0.15),  # dark brown
    (0.15, 0.30, 0.75),  # blue
    (0.75, 0.25, 0.25),
    (0.55, 0.35, 0.70),
    (0.90, 0.90, 0.80),
]
EDGE_RESPONSE = 0.08


@dataclass
class ToySceneSpec:
    class_names: list[str] = field(default_factory=lambda: ["Forest", "City", "Farmland", "Road", "Water"])
    num_novel: int = 2
    num_samples: int = 32
    num_test: int = 0
    tile_size: int = 32
    cell_size: int = 8
    patch_size: int = 8
    domain: str = "toy-a"
    palette_shift: float = 0.0  # colour offset applied to every class, for cross-domain sets
    texture_amplitude: float = 0.06
    pixel_noise: float = 0.02
    seed: int = 0

    def validate(self) -> None:
        k = len(self.class_names)
        if k < 1 or len(set(self.class_names)) != k:
            raise ValidationError("class_names must be non-empty and unique")
        if not 0 <= self.num_novel < k:
            raise ValidationError("num_novel must leave at least one seen class")
        if self.tile_size < 2 * self.patch_size:
            raise ValidationError(
                f"tile size {self.tile_size} is smaller than twice the patch size {self.patch_size}"
            )
        if self.tile_size % self.cell_size:
            raise ValidationError("tile_size must be a multiple of cell_size")
        if self.num_samples < 1 or not 0 <= self.num_test <= self.num_samples:
            raise ValidationError("need num_samples >= 1 and 0 <= num_test <= num_samples")

    @property
    def seen_classes(self) -> list[str]:
        return self.class_names[: len(self.class_names) - self.num_novel]

    @property
    def novel_classes(self) -> list[str]:
        return self.class_names[len(self.class_names) - self.num_novel:]


def class_colors(k: int, shift: float = 0.0) -> np.ndarray:
    cols = list(PALETTE[:k])
    rng = np.random.default_rng(1234)
    while len(cols) < k:
        cols.append(tuple(rng.uniform(0.1, 0.9, 3)))
    return np.clip(np.array(cols) + shift, 0.0, 1.0)


def sar_levels(k: int) -> np.ndarray:
    """Per-class backscatter, evenly spaced in [0.05, 0.95] by class index."""
    if k == 1:
        return np.array([0.5])
    return np.linspace(0.05, 0.95, k)


def _layout(spec: ToySceneSpec, rng: np.random.Generator) -> np.ndarray:
    k = len(spec.class_names)
    g = spec.tile_size // spec.cell_size
    min_classes = min(k, 2)
    while True:
        # smooth per-class scores on the cell grid -> connected blobs
        coarse = rng.normal(size=(k, g // 2 + 2, g // 2 + 2))
        scores = np.stack([_upsample_cells(c, g) for c in coarse]) + 0.3 * rng.normal(size=(k, g, g))
        cells = scores.argmax(0)
        if len(np.unique(cells)) >= min_classes:
            return np.kron(cells, np.ones((spec.cell_size, spec.cell_size), dtype=np.int64))


def _upsample_cells(c: np.ndarray, g: int) -> np.ndarray:
    # bilinear upsample of a small lattice onto a g x g grid
    n = c.shape[0] - 1
    t = np.linspace(0, n - 1, g)
    i0 = np.floor(t).astype(int)
    f = t - i0
    rows = c[i0] * (1 - f)[:, None] + c[i0 + 1] * f[:, None]
    return rows[:, i0] * (1 - f)[None, :] + rows[:, i0 + 1] * f[None, :]


def boundary_mask(label: np.ndarray) -> np.ndarray:
    m = np.zeros(label.shape, dtype=bool)
    m[:-1] |= label[:-1] != label[1:]
    m[1:] |= label[1:] != label[:-1]
    m[:, :-1] |= label[:, :-1] != label[:, 1:]
    m[:, 1:] |= label[:, 1:] != label[:, :-1]
    return m


def render_sar(label: np.ndarray, k: int) -> np.ndarray:
    sar = sar_levels(k)[label] + EDGE_RESPONSE * boundary_mask(label)
    return np.clip(sar, 0.0, 1.0)[..., None]


def render_rgb(label: np.ndarray, spec: ToySceneSpec, rng: np.random.Generator) -> np.ndarray:
    k = len(spec.class_names)
    h, w = label.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    colors = class_colors(k, spec.palette_shift)
    rgb = colors[label].copy()
    # class-dependent stripe orientation / wavelength
    angle = np.pi * np.arange(k) / max(k, 1)
    wavelength = 3.0 + 2.0 * (np.arange(k) % 3)
    phase = (xx * np.cos(angle[label]) + yy * np.sin(angle[label])) / wavelength[label]
    rgb += spec.texture_amplitude * np.sin(2 * np.pi * phase)[..., None]
    rgb += spec.pixel_noise * rng.normal(size=rgb.shape)
    return np.clip(rgb, 0.0, 1.0)


def make_toy_sample(spec: ToySceneSpec, index: int) -> PairedSample:
    rng = np.random.default_rng([spec.seed, index])
    label = _layout(spec, rng)
    k = len(spec.class_names)
    return PairedSample(render_rgb(label, spec, rng), render_sar(label, k), label, spec.domain)


def generate_toy_dataset(spec: ToySceneSpec, out_dir: str | Path) -> tuple[DatasetManifest, Path]:
    """Write tiles plus ``manifest.json`` and ``vocab.json`` under ``out_dir``."""
    spec.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    n_train = spec.num_samples - spec.num_test
    for i in range(spec.num_samples):
        sample = make_toy_sample(spec, i)
        names = {kind: f"{kind}/{i:04d}.png" for kind in ("rgb", "sar", "label")}
        save_paired_sample(sample, out / names["rgb"], out / names["sar"], out / names["label"])
        split = "train" if i < n_train else "test"
        entries.append(ManifestEntry(names["rgb"], names["sar"], names["label"], split, spec.domain))
    manifest = DatasetManifest((spec.tile_size, spec.tile_size), tuple(entries), out)
    path = save_manifest(manifest, out / "manifest.json")
    vocab = {"seen_classes": spec.seen_classes, "novel_classes": spec.novel_classes}
    (out / "vocab.json").write_text(json.dumps(vocab, indent=1) + "\n")
    return manifest, path
