"""Synthetic cloud contamination of the optical channel.

The opacity field is multi-octave bilinear value noise (amplitudes halving per
octave), contrast-stretched around 0.5 and scaled into [0, alpha_max].
"""

from __future__ import annotations

import numpy as np

from .config import PROFILE_ALPHA, VARIED_ALPHA_RANGE, CloudParams
from .data import PairedSample


def value_noise(shape: tuple[int, int], octaves: int, base_period: float,
                rng: np.random.Generator) -> np.ndarray:
    """Fractal value noise normalised to [0, 1]."""
    h, w = shape
    total = np.zeros((h, w))
    amp, norm = 1.0, 0.0
    for o in range(octaves):
        period = max(base_period / 2 ** o, 1.0)
        gh, gw = int(np.ceil(h / period)) + 2, int(np.ceil(w / period)) + 2
        lattice = rng.random((gh, gw))
        oy, ox = rng.random(2)
        ys = np.arange(h) / period + oy
        xs = np.arange(w) / period + ox
        y0, x0 = np.floor(ys).astype(int), np.floor(xs).astype(int)
        fy, fx = (ys - y0)[:, None], (xs - x0)[None, :]
        a = lattice[y0][:, x0]
        b = lattice[y0][:, x0 + 1]
        c = lattice[y0 + 1][:, x0]
        d = lattice[y0 + 1][:, x0 + 1]
        total += amp * ((a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy)
        norm += amp
        amp *= 0.5
    return total / norm


def cloud_alpha(shape: tuple[int, int], params: CloudParams, key: int = 0) -> np.ndarray:
    """Opacity field in [0, alpha_max]; deterministic in (params.seed, key)."""
    if params.profile == "none":
        return np.zeros(shape)
    rng = np.random.default_rng([params.seed, key])
    if params.alpha_max >= 0:
        a_max = params.alpha_max
    elif params.profile == "varied":
        a_max = float(rng.uniform(*VARIED_ALPHA_RANGE))
    else:
        a_max = PROFILE_ALPHA[params.profile]
    n = value_noise(shape, params.noise_octaves, params.noise_base_period, rng)
    stretched = 0.5 + params.contrast * (n - 0.5) + (params.coverage - 0.5)
    return a_max * np.clip(stretched, 0.0, 1.0)


def composite(rgb: np.ndarray, alpha: np.ndarray, color) -> np.ndarray:
    a = alpha[..., None]
    return a * np.asarray(color, dtype=np.float64) + (1.0 - a) * rgb


def synthesize_clouds(sample: PairedSample, params: CloudParams, key: int = 0,
                      alpha: np.ndarray | None = None) -> PairedSample:
    """Blend clouds into ``sample.rgb``; SAR and label pass through untouched."""
    if params.profile == "none" and alpha is None:
        return sample
    if alpha is None:
        alpha = cloud_alpha(sample.label.shape, params, key)
    rgb = np.clip(composite(sample.rgb, alpha, params.cloud_color), 0.0, 1.0)
    return sample.with_(rgb=rgb)
