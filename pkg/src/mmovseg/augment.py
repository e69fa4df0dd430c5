"""Geometrically consistent augmentation of RGB/SAR/label triples."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .config import AugmentParams
from .data import PairedSample


@dataclass(frozen=True)
class Transform:
    hflip: bool = False
    vflip: bool = False
    translate: tuple[float, float] = (0.0, 0.0)  # (rows, cols) in output pixels
    scale: float = 1.0
    angle: float = 0.0  # degrees, counter-clockwise as displayed

    @property
    def is_rigid_identity(self) -> bool:
        return self.translate == (0.0, 0.0) and self.scale == 1.0 and self.angle == 0.0


def sample_transform(params: AugmentParams, key=0) -> Transform:
    if isinstance(key, int):
        key = (key,)
    rng = np.random.default_rng([params.seed, *key])
    # draw every variable unconditionally so flags do not shift later draws
    u = rng.random(7)
    t = params.translate
    lo, hi = params.scale
    return Transform(
        hflip=params.hflip and u[0] < 0.5,
        vflip=params.vflip and u[1] < 0.5,
        translate=(float(np.rint((2 * u[2] - 1) * t)), float(np.rint((2 * u[3] - 1) * t))),
        scale=float(lo + (hi - lo) * u[4]) if hi > lo else float(lo),
        angle=float((2 * u[5] - 1) * params.rotation),
    )


def _affine(shape: tuple[int, int], tf: Transform) -> tuple[np.ndarray, np.ndarray]:
    """Matrix/offset mapping output (row, col) to input (row, col)."""
    h, w = shape
    c = np.array([(h - 1) / 2, (w - 1) / 2])
    th = math.radians(tf.angle)
    cos, sin = math.cos(th), math.sin(th)
    if tf.angle % 90 == 0:
        # exact trig for right angles keeps nearest-neighbour labels lossless
        cos, sin = round(cos), round(sin)
    m = np.array([[cos, sin], [-sin, cos]]) / tf.scale
    offset = c - m @ (c + np.asarray(tf.translate))
    return m, offset


def warp(arr: np.ndarray, tf: Transform, order: int, cval: float) -> np.ndarray:
    if tf.hflip:
        arr = arr[:, ::-1]
    if tf.vflip:
        arr = arr[::-1]
    if tf.is_rigid_identity:
        return np.ascontiguousarray(arr)
    m, offset = _affine(arr.shape[:2], tf)
    if arr.ndim == 2:
        return ndimage.affine_transform(arr, m, offset, order=order, mode="constant", cval=cval)
    return np.stack(
        [ndimage.affine_transform(arr[..., k], m, offset, order=order, mode="constant", cval=cval)
         for k in range(arr.shape[2])],
        axis=-1,
    )


def apply_transform(sample: PairedSample, tf: Transform, ignore_index: int = 255) -> PairedSample:
    return sample.with_(
        rgb=warp(sample.rgb, tf, order=1, cval=0.0),
        sar=warp(sample.sar, tf, order=1, cval=0.0),
        label=warp(sample.label, tf, order=0, cval=ignore_index).astype(sample.label.dtype),
    )


def apply_paired_augmentation(sample: PairedSample, params: AugmentParams, key=0,
                              ignore_index: int = 255) -> PairedSample:
    """One transform drawn from ``params`` and applied to all three rasters."""
    params.validate()
    if not params.enabled:
        return sample
    return apply_transform(sample, sample_transform(params, key), ignore_index)
