"""Paired RGB/SAR/label samples: tile IO and seeded batch streams."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from .config import AugmentParams, CloudParams, ValidationError
from .vocab import DatasetManifest, ManifestEntry


@dataclass(frozen=True)
class PairedSample:
    rgb: np.ndarray  # H x W x 3 float64 in [0, 1]
    sar: np.ndarray  # H x W x 1 float64 in [0, 1]
    label: np.ndarray  # H x W int64, class index or ignore_index
    domain: str | None = None

    def __post_init__(self):
        h, w = self.label.shape
        if self.rgb.shape != (h, w, 3) or self.sar.shape != (h, w, 1):
            raise ValidationError(
                f"rgb {self.rgb.shape}, sar {self.sar.shape} and label {self.label.shape} disagree"
            )

    def with_(self, **kw) -> "PairedSample":
        return replace(self, **kw)


def _read_png(path: Path, channels: int, kind: str) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode == "P":
            raise ValidationError(f"{kind} tile {path} is palette-encoded")
        arr = np.asarray(im)
    got = 1 if arr.ndim == 2 else arr.shape[2]
    if got != channels:
        raise ValidationError(f"{kind} tile {path} has {got} channel(s), expected {channels}")
    if arr.dtype != np.uint8:
        raise ValidationError(f"{kind} tile {path} is not 8-bit")
    return arr


def load_paired_sample(entry: ManifestEntry, root: Path | str = ".", num_classes: int | None = None,
                       ignore_index: int = 255) -> PairedSample:
    root = Path(root)
    rgb = _read_png(root / entry.rgb, 3, "rgb").astype(np.float64) / 255.0
    sar = _read_png(root / entry.sar, 1, "sar").astype(np.float64)[..., None] / 255.0
    label = _read_png(root / entry.label, 1, "label").astype(np.int64)
    if num_classes is not None:
        check_labels(label, num_classes, ignore_index, where=str(entry.label))
    return PairedSample(rgb, sar, label, entry.domain)


def check_labels(label: np.ndarray, num_classes: int, ignore_index: int, where: str = "label") -> None:
    bad = (label != ignore_index) & ((label < 0) | (label >= num_classes))
    if bad.any():
        vals = sorted(set(label[bad].tolist()))
        raise ValidationError(f"{where}: label value(s) {vals} outside a {num_classes}-class vocabulary")


def save_paired_sample(sample: PairedSample, rgb_path: Path, sar_path: Path, label_path: Path) -> None:
    for p in (rgb_path, sar_path, label_path):
        p.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(sample.rgb), mode="RGB").save(rgb_path)
    Image.fromarray(to_uint8(sample.sar[..., 0]), mode="L").save(sar_path)
    Image.fromarray(sample.label.astype(np.uint8), mode="L").save(label_path)


def to_uint8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(x * 255.0), 0, 255).astype(np.uint8)


@dataclass
class Batch:
    rgb: np.ndarray  # B x H x W x 3
    sar: np.ndarray  # B x H x W x 1
    label: np.ndarray  # B x H x W
    indices: list[int]

    def __len__(self) -> int:
        return len(self.indices)


def load_split(manifest: DatasetManifest, split: str, num_classes: int | None = None,
               ignore_index: int = 255) -> list[PairedSample]:
    entries = manifest.split(split)
    if not entries:
        raise ValidationError(f"manifest has no {split!r} entries")
    return [load_paired_sample(e, manifest.root, num_classes, ignore_index) for e in entries]


def prepare_sample(sample: PairedSample, index: int, epoch: int, split: str,
                   augment: AugmentParams | None, cloud: CloudParams | None,
                   cloud_splits=("train", "test")) -> PairedSample:
    """Clouds then augmentation; both pure functions of (sample, index, epoch, seeds)."""
    from .augment import apply_paired_augmentation
    from .clouds import synthesize_clouds

    if cloud is not None and cloud.profile != "none" and split in cloud_splits:
        # keyed on the sample index only: the same clouds every epoch, like a baked variant
        sample = synthesize_clouds(sample, cloud, key=index)
    if augment is not None and augment.enabled and split == "train":
        sample = apply_paired_augmentation(sample, augment, key=(epoch, index))
    return sample


def make_batches(samples: "list[PairedSample] | DatasetManifest", split: str, batch_size: int, seed: int,
                 augment: AugmentParams | None = None, cloud: CloudParams | None = None,
                 cloud_splits=("train", "test"), shuffle: bool = True, epochs: int | None = None,
                 start: int = 0) -> Iterator[Batch]:
    """Yield batches forever (or for ``epochs``), skipping the first ``start`` batches.

    The per-epoch permutation comes from ``(seed, epoch)`` so batch k is the same
    whether or not the stream was restarted at k.
    """
    if isinstance(samples, DatasetManifest):
        samples = load_split(samples, split)
    n = len(samples)
    if n == 0:
        raise ValidationError(f"split {split!r} is empty")
    per_epoch = -(-n // batch_size)
    epoch, pos = divmod(start, per_epoch)
    while epochs is None or epoch < epochs:
        order = np.random.default_rng([seed, epoch]).permutation(n) if shuffle else np.arange(n)
        for b in range(pos, per_epoch):
            idx = [int(i) for i in order[b * batch_size:(b + 1) * batch_size]]
            prepared = [prepare_sample(samples[i], i, epoch, split, augment, cloud, cloud_splits) for i in idx]
            yield Batch(
                np.stack([s.rgb for s in prepared]),
                np.stack([s.sar for s in prepared]),
                np.stack([s.label for s in prepared]),
                idx,
            )
        pos = 0
        epoch += 1
